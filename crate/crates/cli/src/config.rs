//! Run configuration: a single JSON document whose defaults reproduce the
//! reference simulation setup, so `scan` with no arguments sweeps the
//! standard comparison.

// validation guards are written as negated comparisons so that NaN fails
// them too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use decoy84_core::optimize::SchemeSelection;
use decoy84_core::{ScanInputs, SearchSpace, SecurityParams};

/// A value that is either pinned or left to the optimizer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OrOptimize<T> {
    /// Pinned value.
    Fixed(T),
    /// The literal string `"optimize"`.
    Free(OptimizeKeyword),
}

/// Marker for the `"optimize"` keyword.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum OptimizeKeyword {
    #[serde(rename = "optimize")]
    Optimize,
}

impl<T: Copy> OrOptimize<T> {
    pub fn fixed(&self) -> Option<T> {
        match self {
            OrOptimize::Fixed(v) => Some(*v),
            OrOptimize::Free(_) => None,
        }
    }
}

const OPTIMIZE: OrOptimize<f64> = OrOptimize::Free(OptimizeKeyword::Optimize);

/// Channel block: detector background, misalignment, loss grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelBlock {
    /// Background count rate.
    pub y0: f64,
    /// Misalignment error probability.
    pub ed: f64,
    /// Channel losses to evaluate, in dB.
    pub loss_db_grid: Vec<f64>,
}

impl Default for ChannelBlock {
    fn default() -> Self {
        Self {
            y0: 1.7e-6,
            ed: 0.033,
            loss_db_grid: (0..=20).map(f64::from).collect(),
        }
    }
}

/// Security block: error correction, fluctuation confidence, key budget.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityBlock {
    /// Error-correction inefficiency.
    pub f: f64,
    /// Standard deviations for the fluctuation analysis.
    pub u_alpha: f64,
    /// Failure probability of the phase-error tail bound.
    pub p_theta_x: f64,
    /// Total pulses sent.
    pub n_total: f64,
}

impl Default for SecurityBlock {
    fn default() -> Self {
        Self {
            f: 1.16,
            u_alpha: 5.0,
            p_theta_x: 1e-7,
            n_total: 6e9,
        }
    }
}

/// Source block: intensities, basis bias and allocation, each either
/// pinned or optimized.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SourceBlock {
    /// Signal intensity.
    pub mu: OrOptimize<f64>,
    /// Decoy intensity.
    pub nu: OrOptimize<f64>,
    /// Receiver Z-basis probability.
    pub p_z: OrOptimize<f64>,
    /// Allocation fractions `[a_mu, a_nu_z, a_nu_x, a_0]`.
    pub allocation: OrOptimize<[f64; 4]>,
}

impl Default for SourceBlock {
    fn default() -> Self {
        Self {
            mu: OrOptimize::Fixed(0.479),
            nu: OPTIMIZE,
            p_z: OPTIMIZE,
            allocation: OrOptimize::Free(OptimizeKeyword::Optimize),
        }
    }
}

/// Scheme choice, shared by the config file and the `--scheme` flag.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    /// Biased-basis protocol only.
    Biased,
    /// Unbiased vacuum+weak baseline only.
    Standard,
    /// Both schemes.
    Both,
}

impl From<SchemeChoice> for SchemeSelection {
    fn from(c: SchemeChoice) -> Self {
        match c {
            SchemeChoice::Biased => SchemeSelection::Biased,
            SchemeChoice::Standard => SchemeSelection::Standard,
            SchemeChoice::Both => SchemeSelection::Both,
        }
    }
}

/// Run block: scheme, seed, output directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    /// Which scheme(s) to run.
    pub scheme: SchemeChoice,
    /// Seed for the Monte Carlo commands (scans are deterministic anyway).
    pub seed: u64,
    /// Output directory for result files.
    pub out_dir: PathBuf,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            scheme: SchemeChoice::Both,
            seed: 1,
            out_dir: PathBuf::from("."),
        }
    }
}

/// Eavesdropping model for `validate`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryChoice {
    /// Honest channel.
    None,
    /// Eve measures everything in Z and resends.
    InterceptResendZ,
}

/// Monte Carlo block for `validate`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct McBlock {
    /// Pulses to simulate (at least 10^4).
    pub n_pulses: u64,
    /// Channel loss for the run, in dB.
    pub loss_db: f64,
    /// Adversary model.
    pub adversary: AdversaryChoice,
    /// Exit nonzero when any observable deviates by more than this many
    /// binomial standard deviations.
    pub sigma_threshold: f64,
    /// Also write the per-cell counts as CSV.
    pub dump_counts: bool,
}

impl Default for McBlock {
    fn default() -> Self {
        Self {
            n_pulses: 10_000_000,
            loss_db: 10.0,
            adversary: AdversaryChoice::None,
            sigma_threshold: 5.0,
            dump_counts: false,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelBlock,
    pub security: SecurityBlock,
    pub source: SourceBlock,
    pub run: RunBlock,
    pub mc: McBlock,
}

impl RunConfig {
    /// Load from a JSON file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    /// Schema-level validation shared by all commands.
    pub fn validate(&self) -> anyhow::Result<()> {
        if !(0.0..=1.0).contains(&self.channel.y0) {
            bail!("channel.y0 must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.channel.ed) {
            bail!("channel.ed must lie in [0, 1]");
        }
        if self.channel.loss_db_grid.is_empty() {
            bail!("channel.loss_db_grid must not be empty");
        }
        if self.channel.loss_db_grid.iter().any(|l| !(*l >= 0.0)) {
            bail!("channel.loss_db_grid entries must be nonnegative");
        }
        SecurityParams::new(
            self.security.f,
            self.security.u_alpha,
            self.security.p_theta_x,
        )
        .map_err(|e| anyhow::anyhow!("security block: {e}"))?;
        if !(self.security.n_total >= 1.0) {
            bail!("security.n_total must be at least 1");
        }
        if let (Some(mu), Some(nu)) = (self.source.mu.fixed(), self.source.nu.fixed()) {
            if !(nu > 0.0 && nu < mu) {
                bail!("source.nu must satisfy 0 < nu < mu");
            }
        }
        if let Some(pz) = self.source.p_z.fixed() {
            if !(0.5..=1.0).contains(&pz) {
                bail!("source.p_z must lie in [0.5, 1]");
            }
        }
        if let Some(a) = self.source.allocation.fixed() {
            if a.iter().any(|f| *f < 0.0) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                bail!("source.allocation must be nonnegative and sum to 1");
            }
        }
        if !(self.mc.sigma_threshold > 0.0) {
            bail!("mc.sigma_threshold must be positive");
        }
        Ok(())
    }

    /// Security parameters (validated).
    pub fn security_params(&self) -> SecurityParams {
        SecurityParams::new(
            self.security.f,
            self.security.u_alpha,
            self.security.p_theta_x,
        )
        .expect("validated config")
    }

    /// Scan inputs shared by every loss point.
    pub fn scan_inputs(&self) -> ScanInputs {
        ScanInputs {
            y0: self.channel.y0,
            ed: self.channel.ed,
            security: self.security_params(),
            n_total: self.security.n_total,
            mu: self.source.mu.fixed().unwrap_or(0.479),
        }
    }

    /// Search space implied by the source block: pinned values collapse
    /// their axis, `"optimize"` leaves it free. A free `mu` searches
    /// `[0.05, 1.5]`.
    pub fn search_space(&self) -> SearchSpace {
        let mu = self.source.mu.fixed().unwrap_or(0.479);
        let mut space = SearchSpace::new(mu);
        if self.source.mu.fixed().is_none() {
            space.mu_range = Some((0.05, 1.5));
        }
        if let Some(nu) = self.source.nu.fixed() {
            space.nu_range = (nu, nu);
        }
        if let Some(pz) = self.source.p_z.fixed() {
            space.pz_range = (pz, pz);
        }
        space.alloc = self.source.allocation.fixed();
        space
    }
}

/// Parse `--grid start:stop:step` (inclusive stop, dB).
pub fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:stop:step, got {s:?}");
    }
    let start: f64 = parts[0].parse().context("grid start")?;
    let stop: f64 = parts[1].parse().context("grid stop")?;
    let step: f64 = parts[2].parse().context("grid step")?;
    if !(step > 0.0) || stop < start || !(start >= 0.0) {
        bail!("grid requires 0 <= start <= stop and step > 0");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + step * i as f64).collect())
}
