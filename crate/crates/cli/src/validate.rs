//! `validate`: run the pulse-level Monte Carlo against the analytic model
//! and report the deviation of every observable in binomial standard
//! deviations.

use std::io::Write;

use anyhow::{anyhow, Context};

use decoy84_core::sim::{simulate, AdversaryConfig, MeasBasis, PulseClass, SimCounts};
use decoy84_core::{
    db_to_transmittance, expected_observables, ChannelParams, ObservedStats, ProtocolParams,
};

use crate::config::{AdversaryChoice, RunConfig};
use crate::output::fmt_num;
use crate::CommandError;

/// Defaults used when the source block leaves parameters to the optimizer:
/// the Monte Carlo needs one concrete operating point.
const DEFAULT_NU: f64 = 0.1;
const DEFAULT_PZ: f64 = 0.95;
const DEFAULT_ALLOC: [f64; 4] = [0.5, 0.2, 0.2, 0.1];

struct Row {
    name: &'static str,
    analytic: f64,
    empirical: f64,
    z: f64,
}

/// Deviation of a count `k` out of `n` from a binomial with rate `p`, in
/// standard deviations. Degenerate cells surface as infinite so they trip
/// the threshold instead of passing silently.
fn z_score(k: u64, n: u64, p: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let empirical = k as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    if sigma == 0.0 {
        if empirical == p {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical - p).abs() / sigma
    }
}

fn rows(counts: &SimCounts, expected: &ObservedStats) -> Vec<Row> {
    let sig = counts.cell(PulseClass::Signal, MeasBasis::Z);
    let dec_z = counts.cell(PulseClass::DecoyZ, MeasBasis::Z);
    let dec_x = counts.cell(PulseClass::DecoyX, MeasBasis::X);
    let vac_z = counts.cell(PulseClass::Vacuum, MeasBasis::Z);
    let vac_x = counts.cell(PulseClass::Vacuum, MeasBasis::X);
    let vac_sent = vac_z.sent + vac_x.sent;
    let vac_detected = vac_z.detected + vac_x.detected;
    let ratio = |k: u64, n: u64| if n > 0 { k as f64 / n as f64 } else { f64::NAN };
    vec![
        Row {
            name: "q_mu_z",
            analytic: expected.q_mu_z,
            empirical: ratio(sig.detected, sig.sent),
            z: z_score(sig.detected, sig.sent, expected.q_mu_z),
        },
        Row {
            name: "e_mu_z",
            analytic: expected.e_mu_z,
            empirical: ratio(sig.errors, sig.detected),
            z: z_score(sig.errors, sig.detected, expected.e_mu_z),
        },
        Row {
            name: "q_nu_z",
            analytic: expected.q_nu_z,
            empirical: ratio(dec_z.detected, dec_z.sent),
            z: z_score(dec_z.detected, dec_z.sent, expected.q_nu_z),
        },
        Row {
            name: "q_nu_x",
            analytic: expected.q_nu_x,
            empirical: ratio(dec_x.detected, dec_x.sent),
            z: z_score(dec_x.detected, dec_x.sent, expected.q_nu_x),
        },
        Row {
            name: "eq_nu_x",
            analytic: expected.eq_nu_x,
            empirical: ratio(dec_x.errors, dec_x.sent),
            z: z_score(dec_x.errors, dec_x.sent, expected.eq_nu_x),
        },
        Row {
            name: "y0",
            analytic: expected.y0_obs,
            empirical: ratio(vac_detected, vac_sent),
            z: z_score(vac_detected, vac_sent, expected.y0_obs),
        },
    ]
}

fn dump_counts(config: &RunConfig, counts: &SimCounts) -> anyhow::Result<()> {
    let out_dir = &config.run.out_dir;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let path = out_dir.join("counts.csv");
    let mut file =
        std::fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    writeln!(file, "intensity_class,alice_basis,bob_basis,sent,detected,errors")?;
    for (class, basis, cell) in counts.iter_cells() {
        let class_name = match class {
            PulseClass::Signal => "signal",
            PulseClass::DecoyZ => "decoy_z",
            PulseClass::DecoyX => "decoy_x",
            PulseClass::Vacuum => "vacuum",
        };
        let alice = match class.alice_basis() {
            Some(MeasBasis::Z) => "Z",
            Some(MeasBasis::X) => "X",
            None => "-",
        };
        let bob = match basis {
            MeasBasis::Z => "Z",
            MeasBasis::X => "X",
        };
        writeln!(
            file,
            "{class_name},{alice},{bob},{},{},{}",
            cell.sent, cell.detected, cell.errors
        )?;
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<(), CommandError> {
    if config.mc.n_pulses < 10_000 {
        return Err(CommandError::Validation(anyhow!(
            "mc.n_pulses must be at least 10^4 for meaningful statistics"
        )));
    }
    let validation = |msg: String| CommandError::Validation(anyhow!("{msg}"));

    let mu = config.source.mu.fixed().unwrap_or(0.479);
    let nu = config.source.nu.fixed().unwrap_or(DEFAULT_NU);
    let p_z = config.source.p_z.fixed().unwrap_or(DEFAULT_PZ);
    let alloc = config.source.allocation.fixed().unwrap_or(DEFAULT_ALLOC);

    let eta = db_to_transmittance(config.mc.loss_db).map_err(|e| validation(e.to_string()))?;
    let ch = ChannelParams::new(eta, config.channel.y0, config.channel.ed)
        .map_err(|e| validation(e.to_string()))?;
    let p = ProtocolParams::from_fractions(mu, nu, config.mc.n_pulses as f64, alloc, p_z)
        .map_err(|e| validation(e.to_string()))?;
    let adversary = match config.mc.adversary {
        AdversaryChoice::None => AdversaryConfig::None,
        AdversaryChoice::InterceptResendZ => AdversaryConfig::InterceptResendZ,
    };

    log::info!(
        "simulating {} pulses at {} dB, adversary {:?}",
        config.mc.n_pulses,
        config.mc.loss_db,
        config.mc.adversary
    );
    let counts = simulate(&p, &ch, &adversary, config.run.seed, config.mc.n_pulses)
        .map_err(|e| CommandError::Runtime(anyhow!("simulation failed: {e}")))?;
    let expected = expected_observables(mu, nu, &ch);

    let rows = rows(&counts, &expected);
    println!(
        "{:<10} {:>20} {:>20} {:>10}",
        "observable", "analytic", "empirical", "z"
    );
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst.max(r.z);
        println!(
            "{:<10} {:>20} {:>20} {:>10.3}",
            r.name,
            fmt_num(r.analytic),
            fmt_num(r.empirical),
            r.z
        );
    }

    if config.mc.dump_counts {
        dump_counts(config, &counts).map_err(CommandError::Runtime)?;
    }

    if worst > config.mc.sigma_threshold {
        return Err(CommandError::Validation(anyhow!(
            "worst deviation {worst:.3} sigma exceeds threshold {}",
            config.mc.sigma_threshold
        )));
    }
    println!(
        "all observables within {} sigma (worst {worst:.3})",
        config.mc.sigma_threshold
    );
    Ok(())
}
