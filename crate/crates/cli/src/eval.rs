//! `eval`: compute a single key-rate report at fully pinned parameters and
//! print it as JSON.

use anyhow::anyhow;

use decoy84_core::{
    db_to_transmittance, evaluate_biased, evaluate_standard, ChannelParams, KeyRateReport,
    ProtocolParams, StandardParams,
};

use crate::config::{RunConfig, SchemeChoice};
use crate::CommandError;

fn validation(msg: impl Into<String>) -> CommandError {
    CommandError::Validation(anyhow!("{}", msg.into()))
}

/// JSON view of a report; non-finite intermediates become `null`.
pub fn report_json(loss_db: f64, scheme: &str, report: &KeyRateReport) -> serde_json::Value {
    serde_json::json!({
        "loss_db": loss_db,
        "scheme": scheme,
        "rate": report.rate,
        "raw_rate": report.raw_rate,
        "sift_q": report.sift_q,
        "i_ec": report.i_ec,
        "q1_z": report.q1_z,
        "q0": report.q0,
        "y1_l": report.y1_l,
        "e1_u": report.e1_u,
        "e1_pz_u": report.e1_pz_u,
        "theta_x": report.theta_x,
        "feasible": report.feasible,
        "clamped": report.flags.any(),
    })
}

pub fn run(config: &RunConfig) -> Result<(), CommandError> {
    let mu = config
        .source
        .mu
        .fixed()
        .ok_or_else(|| validation("eval requires a fixed source.mu, not \"optimize\""))?;
    let nu = config
        .source
        .nu
        .fixed()
        .ok_or_else(|| validation("eval requires a fixed source.nu, not \"optimize\""))?;
    let alloc = config
        .source
        .allocation
        .fixed()
        .ok_or_else(|| validation("eval requires a fixed source.allocation, not \"optimize\""))?;
    if config.channel.loss_db_grid.len() != 1 {
        return Err(validation(
            "eval requires a single loss point (use --grid L:L:1 or a one-entry loss_db_grid)",
        ));
    }
    let loss_db = config.channel.loss_db_grid[0];
    let eta = db_to_transmittance(loss_db).map_err(|e| validation(e.to_string()))?;
    let ch = ChannelParams::new(eta, config.channel.y0, config.channel.ed)
        .map_err(|e| validation(e.to_string()))?;
    let s = config.security_params();
    let n_total = config.security.n_total;

    let (scheme, report) = match config.run.scheme {
        SchemeChoice::Biased => {
            let p_z = config
                .source
                .p_z
                .fixed()
                .ok_or_else(|| validation("eval requires a fixed source.p_z, not \"optimize\""))?;
            let p = ProtocolParams::from_fractions(mu, nu, n_total, alloc, p_z)
                .map_err(|e| validation(e.to_string()))?;
            let report = evaluate_biased(&p, &ch, &s).map_err(|e| validation(e.to_string()))?;
            ("biased", report)
        }
        SchemeChoice::Standard => {
            // the four-way allocation maps onto the baseline by merging the
            // two decoy entries; p_z is not used
            let a = [alloc[0], alloc[1] + alloc[2], alloc[3]];
            let p = StandardParams::from_fractions(mu, nu, n_total, a)
                .map_err(|e| validation(e.to_string()))?;
            let report = evaluate_standard(&p, &ch, &s).map_err(|e| validation(e.to_string()))?;
            ("standard", report)
        }
        SchemeChoice::Both => {
            return Err(validation(
                "eval reports a single scheme; pass --scheme biased or --scheme standard",
            ));
        }
    };

    let json = report_json(loss_db, scheme, &report);
    println!("{}", serde_json::to_string_pretty(&json).map_err(|e| CommandError::Runtime(e.into()))?);
    Ok(())
}
