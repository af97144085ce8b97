//! Vacuum+weak decoy-state bounds on the single-photon yield and error
//! rate, with finite-size fluctuation adjustments applied to the measured
//! observables.
//!
//! The worst-case directions matter: the signal gain enters the yield bound
//! negatively, so its upper fluctuation is used; the decoy gain enters
//! positively, so its lower fluctuation is used; the background yield is
//! lower-bounded throughout, and the X-basis error-gain product is
//! upper-bounded because it drives the error estimate.

use crate::channel::ObservedStats;
use crate::math::{exp, sqrt};
use crate::params::{ProtocolParams, SecurityParams};
use crate::{Error, Result};

/// Which estimates were clamped or statistically starved on the way to a
/// [`BoundEstimates`]. Any set flag means the corresponding value was
/// truncated rather than computed from the formula alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundFlags {
    /// The lower fluctuation on the decoy gain crossed zero.
    pub starved_q_nu: bool,
    /// The lower fluctuation on the vacuum yield crossed zero.
    pub starved_y0: bool,
    /// The lower fluctuation on the background gain crossed zero.
    pub starved_q0: bool,
    /// The raw single-photon yield bound was negative and was clamped to 0.
    pub y1_clamped: bool,
    /// The raw single-photon error bound was outside `[0, 1]` and was
    /// clamped.
    pub e1_clamped: bool,
    /// No single-photon yield estimate exists (`y1_l = 0`); the error
    /// bound is meaningless and the key rate must be reported as zero.
    pub no_single_photon: bool,
}

impl BoundFlags {
    /// True when any clamp or starvation occurred.
    pub fn any(&self) -> bool {
        self.starved_q_nu
            || self.starved_y0
            || self.starved_q0
            || self.y1_clamped
            || self.e1_clamped
            || self.no_single_photon
    }
}

/// Measured observables after the standard-deviation fluctuation
/// adjustment, shifted in the worst-case directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuatedObservables {
    /// Upper-fluctuated signal gain (Z basis).
    pub q_mu_u: f64,
    /// Lower-fluctuated decoy gain (Z basis).
    pub q_nu_l: f64,
    /// Lower-fluctuated vacuum yield.
    pub y0_l: f64,
    /// Lower-fluctuated background gain within signal pulses.
    pub q0_l: f64,
    /// Upper-fluctuated X-basis error-gain product.
    pub eq_nu_x_u: f64,
    /// Clamp/starvation flags raised so far.
    pub flags: BoundFlags,
}

/// Expected numbers of pulses behind each measured cell. The relative
/// fluctuation of a rate `r` observed over `n` pulses is
/// `u_alpha / sqrt(n r)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MeasuredCells {
    /// Signal pulses measured in Z.
    pub sig_z: f64,
    /// Decoy pulses measured in Z.
    pub dec_z: f64,
    /// Decoy pulses measured in X.
    pub dec_x: f64,
    /// Vacuum pulses (any basis).
    pub vac: f64,
}

impl MeasuredCells {
    pub(crate) fn biased(p: &ProtocolParams) -> Self {
        Self {
            sig_z: p.n_mu * p.p_z,
            dec_z: p.n_nu_z * p.p_z,
            dec_x: p.n_nu_x * p.p_x,
            vac: p.n_0,
        }
    }
}

/// Relative fluctuation `u / sqrt(n r)`, or `None` when the event count is
/// degenerate.
#[inline]
fn rel_fluctuation(u_alpha: f64, pulses: f64, rate: f64) -> Option<f64> {
    let events = pulses * rate;
    if events > 0.0 {
        Some(u_alpha / sqrt(events))
    } else {
        None
    }
}

pub(crate) fn fluctuation_adjust_cells(
    stats: &ObservedStats,
    cells: &MeasuredCells,
    mu: f64,
    s: &SecurityParams,
) -> FluctuatedObservables {
    let mut flags = BoundFlags::default();
    let u = s.u_alpha;

    let q_mu_u = match rel_fluctuation(u, cells.sig_z, stats.q_mu_z) {
        Some(d) => stats.q_mu_z * (1.0 + d),
        None => stats.q_mu_z,
    };

    let q_nu_l = match rel_fluctuation(u, cells.dec_z, stats.q_nu_z) {
        Some(d) if d < 1.0 => stats.q_nu_z * (1.0 - d),
        Some(_) => {
            flags.starved_q_nu = true;
            0.0
        }
        None => {
            if u > 0.0 {
                flags.starved_q_nu = true;
                0.0
            } else {
                stats.q_nu_z
            }
        }
    };

    let y0_l = match rel_fluctuation(u, cells.vac, stats.y0_obs) {
        Some(d) if d < 1.0 => stats.y0_obs * (1.0 - d),
        Some(_) => {
            flags.starved_y0 = true;
            0.0
        }
        None => {
            if u > 0.0 {
                flags.starved_y0 = true;
                0.0
            } else {
                stats.y0_obs
            }
        }
    };

    // The background gain keeps both printed adjustments: the one inside
    // y0_l and a second one against the background-gain count.
    let q0_hat = stats.y0_obs * exp(-mu);
    let q0_l = match rel_fluctuation(u, cells.vac, q0_hat) {
        Some(d) if d < 1.0 => y0_l * exp(-mu) * (1.0 - d),
        Some(_) => {
            flags.starved_q0 = true;
            0.0
        }
        None => {
            if u > 0.0 {
                flags.starved_q0 = true;
                0.0
            } else {
                y0_l * exp(-mu)
            }
        }
    };

    let eq_nu_x_u = match rel_fluctuation(u, cells.dec_x, stats.eq_nu_x) {
        Some(d) => stats.eq_nu_x * (1.0 + d),
        None => stats.eq_nu_x,
    };

    FluctuatedObservables {
        q_mu_u,
        q_nu_l,
        y0_l,
        q0_l,
        eq_nu_x_u,
        flags,
    }
}

/// Apply the standard-deviation fluctuation model to the measured
/// observables of the biased protocol.
pub fn fluctuation_adjust(
    stats: &ObservedStats,
    p: &ProtocolParams,
    s: &SecurityParams,
) -> FluctuatedObservables {
    fluctuation_adjust_cells(stats, &MeasuredCells::biased(p), p.mu, s)
}

/// A value that may have been clamped into its admissible range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedValue {
    /// The bound after clamping.
    pub value: f64,
    /// Whether clamping fired.
    pub clamped: bool,
}

/// Lower bound on the single-photon yield from the vacuum+weak decoy pair:
///
/// `Y1_L = mu/(mu nu - nu^2) * (Q_nu e^nu - Q_mu e^mu nu^2/mu^2
///         - (mu^2 - nu^2)/mu^2 * Y_0)`
///
/// evaluated on the worst-case fluctuated inputs, clamped to `[0, 1]`.
pub fn y1_lower(q_mu_u: f64, q_nu_l: f64, y0_l: f64, mu: f64, nu: f64) -> Result<ClampedValue> {
    if !(nu > 0.0 && nu < mu) {
        return Err(Error::Domain("y1_lower requires 0 < nu < mu"));
    }
    let raw = mu / (mu * nu - nu * nu)
        * (q_nu_l * exp(nu) - q_mu_u * exp(mu) * nu * nu / (mu * mu)
            - (mu * mu - nu * nu) / (mu * mu) * y0_l);
    if raw < 0.0 {
        Ok(ClampedValue {
            value: 0.0,
            clamped: true,
        })
    } else if raw > 1.0 {
        Ok(ClampedValue {
            value: 1.0,
            clamped: true,
        })
    } else {
        Ok(ClampedValue {
            value: raw,
            clamped: false,
        })
    }
}

/// Upper bound on the single-photon error rate from the X-basis decoy
/// error-gain product:
///
/// `e1_U = (E_nu Q_nu e^nu - e_0 Y_0) / (Y1_L nu)`
///
/// clamped to `[0, 1]`. Fails when the yield bound is zero: no
/// single-photon estimate exists.
pub fn e1_upper(eq_nu_x_u: f64, y0_l: f64, y1_l: f64, nu: f64) -> Result<ClampedValue> {
    if !(nu > 0.0) {
        return Err(Error::Domain("e1_upper requires nu > 0"));
    }
    if y1_l <= 0.0 {
        return Err(Error::NoSinglePhotonEstimate);
    }
    let raw = (eq_nu_x_u * exp(nu) - crate::channel::E0 * y0_l) / (y1_l * nu);
    if raw < 0.0 {
        Ok(ClampedValue {
            value: 0.0,
            clamped: true,
        })
    } else if raw > 1.0 {
        Ok(ClampedValue {
            value: 1.0,
            clamped: true,
        })
    } else {
        Ok(ClampedValue {
            value: raw,
            clamped: false,
        })
    }
}

/// The complete set of fluctuation-adjusted bounds feeding the key rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimates {
    /// Upper-fluctuated signal gain.
    pub q_mu_u: f64,
    /// Lower-fluctuated decoy gain (Z).
    pub q_nu_l: f64,
    /// Lower-fluctuated vacuum yield.
    pub y0_l: f64,
    /// Lower-fluctuated background gain.
    pub q0_l: f64,
    /// Upper-fluctuated X-basis error-gain product.
    pub eq_nu_x_u: f64,
    /// Single-photon yield lower bound.
    pub y1_l: f64,
    /// Single-photon gain lower bound `Q1_z = Y1_L mu e^{-mu}`.
    pub q1_z_l: f64,
    /// Single-photon bit-error upper bound (X basis); `1` when no estimate
    /// exists (see [`BoundFlags::no_single_photon`]).
    pub e1_u: f64,
    /// Clamp and starvation flags.
    pub flags: BoundFlags,
}

pub(crate) fn estimate_bounds_cells(
    stats: &ObservedStats,
    cells: &MeasuredCells,
    mu: f64,
    nu: f64,
    s: &SecurityParams,
) -> Result<BoundEstimates> {
    let adj = fluctuation_adjust_cells(stats, cells, mu, s);
    let mut flags = adj.flags;

    let y1 = y1_lower(adj.q_mu_u, adj.q_nu_l, adj.y0_l, mu, nu)?;
    flags.y1_clamped = y1.clamped && y1.value == 0.0;

    let (e1, q1) = if y1.value > 0.0 {
        let e1 = e1_upper(adj.eq_nu_x_u, adj.y0_l, y1.value, nu)?;
        flags.e1_clamped = e1.clamped;
        (e1.value, y1.value * mu * exp(-mu))
    } else {
        flags.no_single_photon = true;
        (1.0, 0.0)
    };

    Ok(BoundEstimates {
        q_mu_u: adj.q_mu_u,
        q_nu_l: adj.q_nu_l,
        y0_l: adj.y0_l,
        q0_l: adj.q0_l,
        eq_nu_x_u: adj.eq_nu_x_u,
        y1_l: y1.value,
        q1_z_l: q1,
        e1_u: e1,
        flags,
    })
}

/// Full decoy-estimation pipeline for the biased protocol: fluctuation
/// adjustment, yield bound from the Z-basis data, error bound from the
/// X-basis data.
pub fn estimate_bounds(
    stats: &ObservedStats,
    p: &ProtocolParams,
    s: &SecurityParams,
) -> Result<BoundEstimates> {
    estimate_bounds_cells(stats, &MeasuredCells::biased(p), p.mu, p.nu, s)
}
