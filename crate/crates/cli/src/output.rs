//! Result files: the scan CSV and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use decoy84_core::optimize::{ScanPoint, SchemeParams};

use crate::config::RunConfig;

/// Scan CSV header; the schema is stable.
pub const CSV_HEADER: &str = "loss_db,rate_biased,rate_standard,improvement_ratio,pz_opt,nu_opt,a_mu,a_nu_z,a_nu_x,a_0,e1pz_u,theta_x";

/// Fixed numeric formatting: 13 significant digits, `nan` for undefined.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.12e}")
    }
}

/// One CSV row for a scan point.
pub fn csv_row(pt: &ScanPoint) -> String {
    let rate_biased = pt.biased.map_or(f64::NAN, |r| r.best_rate);
    let rate_standard = pt.standard.map_or(f64::NAN, |r| r.best_rate);
    let improvement = if rate_standard > 0.0 {
        rate_biased / rate_standard - 1.0
    } else {
        f64::NAN
    };
    let (pz, nu, fracs, e1pz, theta) = match pt.biased {
        Some(r) => {
            let SchemeParams::Biased(p) = r.best_params else {
                unreachable!("biased result carries biased params");
            };
            (p.p_z, p.nu, p.fractions(), r.report.e1_pz_u, r.report.theta_x)
        }
        None => (f64::NAN, f64::NAN, [f64::NAN; 4], f64::NAN, f64::NAN),
    };
    let cols = [
        pt.loss_db,
        rate_biased,
        rate_standard,
        improvement,
        pz,
        nu,
        fracs[0],
        fracs[1],
        fracs[2],
        fracs[3],
        e1pz,
        theta,
    ];
    let mut row = String::new();
    for (i, c) in cols.iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        row.push_str(&fmt_num(*c));
    }
    row
}

/// Write the scan CSV; returns the file path.
pub fn write_csv(out_dir: &Path, points: &[ScanPoint]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let path = out_dir.join("results.csv");
    let mut file = std::fs::File::create(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    writeln!(file, "{CSV_HEADER}")?;
    for pt in points {
        writeln!(file, "{}", csv_row(pt))?;
    }
    Ok(path)
}

/// Write the run manifest next to the CSV; `config` is echoed verbatim so
/// the manifest can be re-ingested as a config file.
pub fn write_manifest(
    out_dir: &Path,
    config: &RunConfig,
    rows: usize,
    wall_time_s: f64,
) -> anyhow::Result<PathBuf> {
    let path = out_dir.join("manifest.json");
    let manifest = serde_json::json!({
        "config": config,
        "seed": config.run.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall_time_s,
        "rows": rows,
        "csv": "results.csv",
    });
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_has_13_significant_digits() {
        assert_eq!(fmt_num(0.125), "1.250000000000e-1");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(0.0), "0.000000000000e0");
    }

    #[test]
    fn header_matches_schema() {
        assert_eq!(CSV_HEADER.split(',').count(), 12);
        assert!(CSV_HEADER.starts_with("loss_db,rate_biased,rate_standard"));
    }
}
