//! Finite-key rate calculator for the biased-basis vacuum+weak decoy-state
//! BB84 protocol.
//!
//! The sender transmits every signal pulse in the Z basis, weak decoy pulses
//! in both bases, and vacuum pulses with no basis at all; the receiver
//! measures in Z with probability `p_z`. The secret key is extracted from
//! Z-basis signal detections only, so the basis-sift loss of the standard
//! protocol is mostly avoided. This crate assembles the corresponding secure
//! key rate under finite-size statistical fluctuations:
//!
//! - [`channel`] — photon-number statistics and honest-channel expected
//!   gains/QBERs for any pulse intensity,
//! - [`decoy`] — vacuum+weak decoy-state bounds on the single-photon yield
//!   and error rate, with standard-deviation fluctuation adjustments,
//! - [`phase`] — the random-sampling tail bound converting the X-basis bit
//!   error rate into an upper bound on the Z-basis phase error rate,
//! - [`rate`] — the GLLP-style key-rate assembly for the biased scheme and
//!   for the unbiased vacuum+weak baseline it is compared against,
//! - [`optimize`] — deterministic per-loss maximization of the rate over
//!   the protocol parameters,
//! - [`sim`] — a pulse-level Monte Carlo oracle used to validate the
//!   analytic model and the soundness of the decoy bounds.
//!
//! The crate is `no_std`-compatible (`alloc` is required); all floating
//! point transcendentals go through `libm` so results are identical across
//! platforms.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
// validation guards are written as negated comparisons so that NaN inputs
// fail them too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod decoy;
mod math;
pub mod optimize;
pub mod params;
pub mod phase;
pub mod rate;
pub mod sim;

pub use channel::{
    db_to_transmittance, error_yield_i, expected_observables, gain_i, overall_gain, overall_qber,
    poisson_pmf, yield_i, ChannelParams, ErrorGain, ObservedStats,
};
pub use decoy::{
    e1_upper, estimate_bounds, fluctuation_adjust, y1_lower, BoundEstimates, BoundFlags,
    FluctuatedObservables,
};
pub use math::binary_entropy;
pub use optimize::{
    optimize_at_loss, scan_losses, OptResult, ScanInputs, ScanPoint, Scheme, SchemeParams,
    SearchSpace,
};
pub use params::{ProtocolParams, SecurityParams, StandardParams};
pub use phase::{phase_error_upper, solve_theta, tail_prob_bound, xi, PhaseErrorBound, SamplingInputs};
pub use rate::{evaluate_biased, evaluate_standard, key_rate_biased, key_rate_standard, sift_factor, KeyRateReport};
pub use sim::{counts_to_stats, simulate, AdversaryConfig, CellTally, MeasBasis, PulseClass, SimCounts};

use core::fmt;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A parameter is outside its mathematical domain.
    Domain(&'static str),
    /// A statistic needed by the estimators has no data behind it
    /// (empty or zero-detection cell).
    MissingStatistic(&'static str),
    /// The single-photon yield bound collapsed to zero, so no error-rate
    /// bound can be formed.
    NoSinglePhotonEstimate,
    /// The optimizer was given an empty feasible region.
    EmptyFeasibleRegion(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::MissingStatistic(cell) => write!(f, "missing statistic: {cell}"),
            Error::NoSinglePhotonEstimate => {
                write!(f, "single-photon yield bound is zero; no error-rate estimate")
            }
            Error::EmptyFeasibleRegion(what) => write!(f, "empty feasible region: {what}"),
        }
    }
}

#[cfg(any(test, feature = "std"))]
impl std::error::Error for Error {}

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;
