//! `scan`: optimize the key rate over a loss grid and write the results
//! CSV plus a run manifest.

use std::time::Instant;

use decoy84_core::scan_losses;

use crate::config::RunConfig;
use crate::output::{write_csv, write_manifest};
use crate::CommandError;

pub fn run(config: &RunConfig) -> Result<(), CommandError> {
    let inputs = config.scan_inputs();
    let space = config.search_space();
    let started = Instant::now();

    log::info!(
        "scanning {} losses, scheme {:?}",
        config.channel.loss_db_grid.len(),
        config.run.scheme
    );
    let points = scan_losses(
        &config.channel.loss_db_grid,
        &inputs,
        &space,
        config.run.scheme.into(),
    )
    .map_err(|e| CommandError::Validation(anyhow::anyhow!("scan setup: {e}")))?;

    for pt in &points {
        log::debug!(
            "loss {} dB: biased {:?}, standard {:?}",
            pt.loss_db,
            pt.biased.map(|r| r.best_rate),
            pt.standard.map(|r| r.best_rate)
        );
    }

    let out_dir = &config.run.out_dir;
    let csv = write_csv(out_dir, &points).map_err(CommandError::Runtime)?;
    let manifest = write_manifest(out_dir, config, points.len(), started.elapsed().as_secs_f64())
        .map_err(CommandError::Runtime)?;
    println!("wrote {} ({} rows) and {}", csv.display(), points.len(), manifest.display());
    Ok(())
}
