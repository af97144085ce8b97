//! Closed-form honest-channel physics: photon-number statistics and the
//! expected gains/QBERs of a weak coherent source through a lossy channel.

use crate::math::{exp, expm1, log1p, pow};
use crate::{Error, Result};

/// Background error rate: a dark count lands on either detector with equal
/// probability.
pub const E0: f64 = 0.5;

/// Channel and detection abstraction: total transmittance, background count
/// rate, and misalignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Total transmittance (channel times detector) in `[0, 1]`.
    pub eta: f64,
    /// Background count rate in `[0, 1]`.
    pub y0: f64,
    /// Probability that a photon hits the erroneous detector, in `[0, 1]`.
    pub ed: f64,
    /// Error rate of background counts; fixed at `1/2` exactly.
    pub e0: f64,
}

impl ChannelParams {
    /// Validated constructor; `e0` is pinned to `1/2`.
    pub fn new(eta: f64, y0: f64, ed: f64) -> Result<Self> {
        for (v, what) in [
            (eta, "transmittance eta must lie in [0, 1]"),
            (y0, "background rate y0 must lie in [0, 1]"),
            (ed, "misalignment ed must lie in [0, 1]"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(what));
            }
        }
        Ok(Self {
            eta,
            y0,
            ed,
            e0: E0,
        })
    }
}

/// Per-intensity, per-basis observables consumed by the decoy estimators.
///
/// In the honest channel these are the closed-form expectations; fed from a
/// simulation or an experiment they are empirical rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedStats {
    /// Gain of the signal state measured in Z.
    pub q_mu_z: f64,
    /// QBER of the signal state measured in Z.
    pub e_mu_z: f64,
    /// Gain of the decoy state measured in Z.
    pub q_nu_z: f64,
    /// Gain of the decoy state measured in X.
    pub q_nu_x: f64,
    /// Error-gain product `E_nu Q_nu` measured in X.
    pub eq_nu_x: f64,
    /// Vacuum-state yield (basis-free).
    pub y0_obs: f64,
}

/// Poisson probability of `n` photons at mean photon number `mu`.
pub fn poisson_pmf(mu: f64, n: u32) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain("poisson mean must be nonnegative"));
    }
    Ok(poisson_pmf_unchecked(mu, n))
}

/// Poisson kernel without the domain check; `mu >= 0` is the caller's
/// responsibility. Computed by running product to avoid overflow in
/// `mu^n / n!`.
#[inline]
pub(crate) fn poisson_pmf_unchecked(mu: f64, n: u32) -> f64 {
    let mut p = exp(-mu);
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

/// `1 - (1 - eta)^i` without cancellation; the probability that at least
/// one of `i` photons survives.
#[inline]
fn survival_complement(i: u32, eta: f64) -> f64 {
    -expm1(i as f64 * log1p(-eta))
}

/// Yield of an `i`-photon state: `Y_i = 1 - (1 - Y_0)(1 - eta)^i`.
///
/// At `i = 0` this is exactly the background rate.
pub fn yield_i(i: u32, ch: &ChannelParams) -> f64 {
    if i == 0 {
        return ch.y0;
    }
    let eta_i = survival_complement(i, ch.eta);
    eta_i + ch.y0 * (1.0 - eta_i)
}

/// Conditional error rate times yield of an `i`-photon state:
/// `e_i Y_i = e_0 Y_0 + e_d [1 - (1 - eta)^i](1 - Y_0)`.
pub fn error_yield_i(i: u32, ch: &ChannelParams) -> f64 {
    if i == 0 {
        return ch.e0 * ch.y0;
    }
    ch.e0 * ch.y0 + ch.ed * survival_complement(i, ch.eta) * (1.0 - ch.y0)
}

/// Gain of the `i`-photon component of a pulse with intensity `mu`:
/// `Q_i = Y_i * P(i | mu)`.
pub fn gain_i(i: u32, mu: f64, ch: &ChannelParams) -> Result<f64> {
    Ok(yield_i(i, ch) * poisson_pmf(mu, i)?)
}

/// Overall gain of a pulse with intensity `mu`:
/// `Q_mu = 1 - e^{-eta mu}(1 - Y_0)`, evaluated as
/// `(1 - e^{-eta mu}) + Y_0 e^{-eta mu}` to stay exact at the corners.
pub fn overall_gain(mu: f64, ch: &ChannelParams) -> f64 {
    debug_assert!(mu >= 0.0);
    let t = -ch.eta * mu;
    -expm1(t) + ch.y0 * exp(t)
}

/// Gain and error-gain product of a pulse, with the QBER left as a ratio
/// the caller takes only where the gain is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorGain {
    /// Overall gain `Q_mu`.
    pub gain: f64,
    /// Error-gain product `E_mu Q_mu`.
    pub error_gain: f64,
}

impl ErrorGain {
    /// QBER `E_mu = (E_mu Q_mu) / Q_mu`, or `None` when the gain is zero
    /// and the ratio is undefined.
    pub fn qber(&self) -> Option<f64> {
        if self.gain > 0.0 {
            Some(self.error_gain / self.gain)
        } else {
            None
        }
    }
}

/// Overall QBER of a pulse with intensity `mu`, returned as the
/// `(Q_mu, E_mu Q_mu)` pair:
/// `E_mu Q_mu = e_0 Y_0 + e_d (1 - e^{-eta mu})(1 - Y_0)`.
pub fn overall_qber(mu: f64, ch: &ChannelParams) -> ErrorGain {
    debug_assert!(mu >= 0.0);
    let gain = overall_gain(mu, ch);
    let error_gain = ch.e0 * ch.y0 + ch.ed * (-expm1(-ch.eta * mu)) * (1.0 - ch.y0);
    ErrorGain { gain, error_gain }
}

/// Expected observables of the honest channel at signal intensity `mu` and
/// decoy intensity `nu`. The honest channel is basis-symmetric, so the Z-
/// and X-basis decoy expectations coincide.
pub fn expected_observables(mu: f64, nu: f64, ch: &ChannelParams) -> ObservedStats {
    let sig = overall_qber(mu, ch);
    let dec = overall_qber(nu, ch);
    ObservedStats {
        q_mu_z: sig.gain,
        e_mu_z: sig.qber().unwrap_or(0.0),
        q_nu_z: dec.gain,
        q_nu_x: dec.gain,
        eq_nu_x: dec.error_gain,
        y0_obs: ch.y0,
    }
}

/// Convert a channel loss in dB to a transmittance: `eta = 10^{-dB/10}`.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::Domain("channel loss in dB must be nonnegative"));
    }
    Ok(pow(10.0, -loss_db / 10.0))
}
