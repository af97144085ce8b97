//! Command-line surface for the biased-basis decoy-state key-rate
//! calculator: loss sweeps (`scan`), single-point reports (`eval`) and
//! Monte Carlo validation (`validate`).
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod config;
mod eval;
mod output;
mod scan;
mod validate;

use config::{parse_grid, RunConfig, SchemeChoice};

/// Command failure, classified for the exit code.
pub enum CommandError {
    /// Bad configuration or a failed check: exit 1.
    Validation(anyhow::Error),
    /// IO or computation failure: exit 2.
    Runtime(anyhow::Error),
}

#[derive(Parser)]
#[command(
    name = "decoy84",
    version,
    about = "Finite-key rates for biased-basis vacuum+weak decoy-state BB84"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file (defaults reproduce the reference setup).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for result files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for the Monte Carlo commands.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Loss grid in dB, inclusive: start:stop:step.
    #[arg(long, global = true, value_name = "START:STOP:STEP")]
    grid: Option<String>,

    /// Scheme selection.
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeChoice>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the key rate over the loss grid; writes results.csv and
    /// manifest.json.
    Scan,
    /// Evaluate one fully pinned parameter point; prints a JSON report.
    Eval,
    /// Run the Monte Carlo protocol simulation against the analytic model.
    Validate,
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(grid) = &cli.grid {
        cfg.channel.loss_db_grid = parse_grid(grid)?;
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(scheme) = cli.scheme {
        cfg.run.scheme = scheme;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("QKD_LOG_LEVEL", "warn"),
    )
    .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Scan => scan::run(&cfg),
        Command::Eval => eval::run(&cfg),
        Command::Validate => validate::run(&cfg),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CommandError::Validation(e)) => {
            eprintln!("validation failure: {e:#}");
            ExitCode::from(1)
        }
        Err(CommandError::Runtime(e)) => {
            eprintln!("runtime failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
