//! Random-sampling tail bound: converts the X-basis single-photon bit
//! error rate into a probabilistic upper bound on the Z-basis single-photon
//! phase error rate.
//!
//! The deviation `theta_x` is the smallest value for which the tail
//! probability bound drops below the target failure probability; the phase
//! error bound is then `e_bx + theta_x`. The bound is evaluated in log2
//! space internally because the exponential factor underflows `f64` for
//! realistic sample sizes.

use crate::decoy::BoundEstimates;
use crate::math::{exp, exp2, h2, log2};
use crate::params::{ProtocolParams, SecurityParams};
use crate::{Error, Result};

/// Bisection tolerance on `theta_x` (absolute).
const THETA_TOL: f64 = 1e-12;

/// Margin keeping the bisection bracket inside the entropy domain.
const BRACKET_MARGIN: f64 = 1e-9;

/// Inputs to the random-sampling argument. The counts are expected counts
/// (real-valued) of single-photon events in each basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingInputs {
    /// X-basis bit error rate among the tested sample.
    pub e_bx: f64,
    /// X-basis single-photon sample count.
    pub n_x: f64,
    /// Z-basis single-photon sample count.
    pub n_z: f64,
    /// Target failure probability.
    pub p_fail: f64,
}

impl SamplingInputs {
    /// Validated constructor: positive counts, `e_bx` in `[0, 1)`,
    /// `p_fail` in `(0, 1)`.
    pub fn new(e_bx: f64, n_x: f64, n_z: f64, p_fail: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&e_bx) {
            return Err(Error::Domain("e_bx must lie in [0, 1)"));
        }
        if !(n_x > 0.0 && n_x.is_finite()) || !(n_z > 0.0 && n_z.is_finite()) {
            return Err(Error::Domain("sample counts must be positive"));
        }
        if !(p_fail > 0.0 && p_fail < 1.0) {
            return Err(Error::Domain("p_fail must lie in (0, 1)"));
        }
        Ok(Self {
            e_bx,
            n_x,
            n_z,
            p_fail,
        })
    }

    /// Fraction of the sample tested in X: `q_x = n_x / (n_x + n_z)`.
    pub fn q_x(&self) -> f64 {
        self.n_x / (self.n_x + self.n_z)
    }

    /// `e_bx` floored away from the `e(1-e)` singularity of the prefactor:
    /// when the measured rate is below `1/(2(n_x+n_z))` it is raised to
    /// that value, and symmetrically capped at the top. Flooring makes the
    /// prefactor finite and smaller, never the resulting phase bound.
    fn e_bx_prefactor(&self) -> f64 {
        let lo = 0.5 / (self.n_x + self.n_z);
        self.e_bx.clamp(lo, 1.0 - lo)
    }
}

/// Exponent function of the tail bound:
///
/// `xi_x = H(e_bx + theta - q_x theta) - q_x H(e_bx) - (1-q_x) H(e_bx + theta)`
pub fn xi(theta_x: f64, e_bx: f64, q_x: f64) -> Result<f64> {
    if !(q_x > 0.0 && q_x < 1.0) {
        return Err(Error::Domain("q_x must lie in (0, 1)"));
    }
    if !(theta_x >= 0.0) {
        return Err(Error::Domain("theta_x must be nonnegative"));
    }
    if !(0.0..=1.0).contains(&e_bx) || e_bx + theta_x > 1.0 {
        return Err(Error::Domain("entropy argument outside [0, 1]"));
    }
    Ok(xi_unchecked(theta_x, e_bx, q_x))
}

#[inline]
fn xi_unchecked(theta_x: f64, e_bx: f64, q_x: f64) -> f64 {
    // the three terms cancel identically at zero deviation
    if theta_x == 0.0 {
        return 0.0;
    }
    h2(e_bx + theta_x - q_x * theta_x) - q_x * h2(e_bx) - (1.0 - q_x) * h2(e_bx + theta_x)
}

/// log2 of the tail probability bound at deviation `theta_x`.
fn log2_tail_bound(theta_x: f64, inp: &SamplingInputs) -> f64 {
    let n = inp.n_x + inp.n_z;
    let e = inp.e_bx_prefactor();
    let log2_prefactor = 0.5 * (log2(n) - log2(e * (1.0 - e) * inp.n_x * inp.n_z));
    log2_prefactor - n * xi_unchecked(theta_x, inp.e_bx, inp.q_x())
}

/// Upper bound on the probability that the phase error rate deviates from
/// the tested X-basis rate by more than `theta_x`:
///
/// `P < sqrt(n_x+n_z) / sqrt(e_bx(1-e_bx) n_x n_z) * 2^{-(n_x+n_z) xi_x(theta_x)}`
///
/// At `theta_x = 0` this is the prefactor alone. Underflows to `0` for very
/// large exponents, which is the correct direction for a bound.
pub fn tail_prob_bound(theta_x: f64, inp: &SamplingInputs) -> f64 {
    exp2(log2_tail_bound(theta_x, inp))
}

/// Smallest deviation `theta_x >= 0` whose tail probability bound is at
/// most `p_fail`, found by bisection; `None` when even the largest
/// admissible deviation cannot reach `p_fail` (the phase error rate is
/// effectively unbounded by this sample).
pub fn solve_theta(inp: &SamplingInputs) -> Option<f64> {
    let target = log2(inp.p_fail);
    if log2_tail_bound(0.0, inp) <= target {
        return Some(0.0);
    }
    let hi_end = 1.0 - inp.e_bx - BRACKET_MARGIN;
    if hi_end <= 0.0 || log2_tail_bound(hi_end, inp) > target {
        return None;
    }
    // invariant: bound(lo) > target >= bound(hi)
    let (mut lo, mut hi) = (0.0, hi_end);
    while hi - lo > THETA_TOL {
        let mid = 0.5 * (lo + hi);
        if log2_tail_bound(mid, inp) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Result of the phase-error estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorBound {
    /// Upper bound on the Z-basis single-photon phase error rate,
    /// clamped to `[0, 1]`; `1/2` when the bound could not be solved.
    pub e1_pz_u: f64,
    /// The deviation added on top of the bit-error bound; `NaN` when the
    /// bound could not be solved.
    pub theta_x: f64,
    /// Whether the tail-bound root was found.
    pub solved: bool,
}

impl PhaseErrorBound {
    fn unsolved() -> Self {
        Self {
            e1_pz_u: 0.5,
            theta_x: f64::NAN,
            solved: false,
        }
    }
}

/// Upper-bound the phase error rate of the single-photon Z-basis events
/// from the decoy estimates. The expected single-photon sample counts are
///
/// `n_z = N_mu p_z Y1_L mu e^{-mu}`, `n_x = N_nu_x p_x Y1_L nu e^{-nu}`
///
/// and the X-basis bit-error bound substitutes the tested rate.
pub fn phase_error_upper(
    bounds: &BoundEstimates,
    p: &ProtocolParams,
    s: &SecurityParams,
) -> PhaseErrorBound {
    let n_z = p.n_mu * p.p_z * bounds.y1_l * p.mu * exp(-p.mu);
    let n_x = p.n_nu_x * p.p_x * bounds.y1_l * p.nu * exp(-p.nu);
    phase_error_upper_counts(bounds.e1_u, n_x, n_z, s)
}

pub(crate) fn phase_error_upper_counts(
    e1_u: f64,
    n_x: f64,
    n_z: f64,
    s: &SecurityParams,
) -> PhaseErrorBound {
    let inp = match SamplingInputs::new(e1_u, n_x, n_z, s.p_theta_x) {
        Ok(inp) => inp,
        Err(_) => return PhaseErrorBound::unsolved(),
    };
    match solve_theta(&inp) {
        Some(theta_x) => PhaseErrorBound {
            e1_pz_u: (e1_u + theta_x).min(1.0),
            theta_x,
            solved: true,
        },
        None => PhaseErrorBound::unsolved(),
    }
}
