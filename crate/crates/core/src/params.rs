//! Protocol and security parameter sets shared by the estimators.

use crate::{Error, Result};

/// Pulse allocation and basis bias for the biased-basis protocol.
///
/// The sender emits `n_mu` signal pulses (intensity `mu`, all in Z),
/// `n_nu_z`/`n_nu_x` weak decoy pulses (intensity `nu`, prepared in Z/X),
/// and `n_0` vacuum pulses. The receiver measures in Z with probability
/// `p_z` and in X with `p_x = 1 - p_z`. Pulse counts are expected counts
/// and may be fractional: this is a design-stage rate calculator, not an
/// event-by-event ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Signal intensity (mean photon number).
    pub mu: f64,
    /// Weak decoy intensity; must satisfy `0 < nu < mu`.
    pub nu: f64,
    /// Total pulses sent.
    pub n_total: f64,
    /// Signal pulses (Z basis).
    pub n_mu: f64,
    /// Decoy pulses prepared in Z.
    pub n_nu_z: f64,
    /// Decoy pulses prepared in X.
    pub n_nu_x: f64,
    /// Vacuum pulses (no basis).
    pub n_0: f64,
    /// Receiver Z-basis probability.
    pub p_z: f64,
    /// Receiver X-basis probability; `p_z + p_x = 1`.
    pub p_x: f64,
}

impl ProtocolParams {
    /// Validated constructor. `p_x` is derived as `1 - p_z`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu: f64,
        nu: f64,
        n_total: f64,
        n_mu: f64,
        n_nu_z: f64,
        n_nu_x: f64,
        n_0: f64,
        p_z: f64,
    ) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain("signal intensity mu must be positive"));
        }
        if !(nu > 0.0 && nu < mu) {
            return Err(Error::Domain("decoy intensity must satisfy 0 < nu < mu"));
        }
        if !(n_total > 0.0) || !n_total.is_finite() {
            return Err(Error::Domain("n_total must be positive"));
        }
        for n in [n_mu, n_nu_z, n_nu_x, n_0] {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::Domain("pulse counts must be nonnegative"));
            }
        }
        let sum = n_mu + n_nu_z + n_nu_x + n_0;
        if (sum - n_total).abs() > 1e-6 * n_total {
            return Err(Error::Domain("pulse counts must sum to n_total"));
        }
        if !(0.0..=1.0).contains(&p_z) {
            return Err(Error::Domain("p_z must lie in [0, 1]"));
        }
        Ok(Self {
            mu,
            nu,
            n_total,
            n_mu,
            n_nu_z,
            n_nu_x,
            n_0,
            p_z,
            p_x: 1.0 - p_z,
        })
    }

    /// Constructor from allocation fractions `[a_mu, a_nu_z, a_nu_x, a_0]`
    /// of `n_total`; the fractions must sum to 1.
    pub fn from_fractions(
        mu: f64,
        nu: f64,
        n_total: f64,
        fractions: [f64; 4],
        p_z: f64,
    ) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("allocation fractions must sum to 1"));
        }
        Self::new(
            mu,
            nu,
            n_total,
            fractions[0] * n_total,
            fractions[1] * n_total,
            fractions[2] * n_total,
            fractions[3] * n_total,
            p_z,
        )
    }

    /// Allocation fractions `[a_mu, a_nu_z, a_nu_x, a_0]`.
    pub fn fractions(&self) -> [f64; 4] {
        [
            self.n_mu / self.n_total,
            self.n_nu_z / self.n_total,
            self.n_nu_x / self.n_total,
            self.n_0 / self.n_total,
        ]
    }
}

/// Allocation for the unbiased vacuum+weak baseline.
///
/// Both parties choose bases uniformly (`p_z = p_x = 1/2`); signal and
/// decoy pulses are split evenly between the bases, so only the totals
/// are free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardParams {
    /// Signal intensity.
    pub mu: f64,
    /// Weak decoy intensity; `0 < nu < mu`.
    pub nu: f64,
    /// Total pulses sent.
    pub n_total: f64,
    /// Signal pulses (split evenly between bases).
    pub n_mu: f64,
    /// Weak decoy pulses (split evenly between bases).
    pub n_nu: f64,
    /// Vacuum pulses.
    pub n_0: f64,
}

impl StandardParams {
    /// Validated constructor.
    pub fn new(mu: f64, nu: f64, n_total: f64, n_mu: f64, n_nu: f64, n_0: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain("signal intensity mu must be positive"));
        }
        if !(nu > 0.0 && nu < mu) {
            return Err(Error::Domain("decoy intensity must satisfy 0 < nu < mu"));
        }
        if !(n_total > 0.0) || !n_total.is_finite() {
            return Err(Error::Domain("n_total must be positive"));
        }
        for n in [n_mu, n_nu, n_0] {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::Domain("pulse counts must be nonnegative"));
            }
        }
        let sum = n_mu + n_nu + n_0;
        if (sum - n_total).abs() > 1e-6 * n_total {
            return Err(Error::Domain("pulse counts must sum to n_total"));
        }
        Ok(Self {
            mu,
            nu,
            n_total,
            n_mu,
            n_nu,
            n_0,
        })
    }

    /// Constructor from allocation fractions `[a_mu, a_nu, a_0]`.
    pub fn from_fractions(mu: f64, nu: f64, n_total: f64, fractions: [f64; 3]) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("allocation fractions must sum to 1"));
        }
        Self::new(
            mu,
            nu,
            n_total,
            fractions[0] * n_total,
            fractions[1] * n_total,
            fractions[2] * n_total,
        )
    }

    /// Allocation fractions `[a_mu, a_nu, a_0]`.
    pub fn fractions(&self) -> [f64; 3] {
        [
            self.n_mu / self.n_total,
            self.n_nu / self.n_total,
            self.n_0 / self.n_total,
        ]
    }
}

/// Security knobs for the finite-key analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityParams {
    /// Error-correction inefficiency, `f >= 1`.
    pub f: f64,
    /// Number of standard deviations for the fluctuation analysis
    /// (`0` disables fluctuations and recovers the asymptotic bounds).
    pub u_alpha: f64,
    /// Failure probability for the phase-error tail bound, in `(0, 1)`.
    pub p_theta_x: f64,
}

impl SecurityParams {
    /// Validated constructor.
    pub fn new(f: f64, u_alpha: f64, p_theta_x: f64) -> Result<Self> {
        if !(f >= 1.0) {
            return Err(Error::Domain("error-correction inefficiency f must be >= 1"));
        }
        if !(u_alpha >= 0.0) || !u_alpha.is_finite() {
            return Err(Error::Domain("u_alpha must be nonnegative"));
        }
        if !(p_theta_x > 0.0 && p_theta_x < 1.0) {
            return Err(Error::Domain("p_theta_x must lie in (0, 1)"));
        }
        Ok(Self {
            f,
            u_alpha,
            p_theta_x,
        })
    }
}

impl Default for SecurityParams {
    /// Simulation defaults: `f = 1.16`, `u_alpha = 5`, `p_theta_x = 1e-7`.
    fn default() -> Self {
        Self {
            f: 1.16,
            u_alpha: 5.0,
            p_theta_x: 1e-7,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_params_validation() {
        // nu must be strictly below mu
        assert!(ProtocolParams::new(0.479, 0.479, 1e9, 5e8, 2e8, 2e8, 1e8, 0.95).is_err());
        assert!(ProtocolParams::new(0.479, 0.6, 1e9, 5e8, 2e8, 2e8, 1e8, 0.95).is_err());
        // counts must sum to n_total
        assert!(ProtocolParams::new(0.479, 0.1, 1e9, 5e8, 2e8, 2e8, 2e8, 0.95).is_err());
        // valid
        let p = ProtocolParams::new(0.479, 0.1, 1e9, 5e8, 2e8, 2e8, 1e8, 0.95).unwrap();
        assert!((p.p_x - 0.05).abs() < 1e-15);
    }

    #[test]
    fn fractions_round_trip() {
        let p =
            ProtocolParams::from_fractions(0.479, 0.1, 6e9, [0.5, 0.2, 0.2, 0.1], 0.95).unwrap();
        let f = p.fractions();
        assert!((f[0] - 0.5).abs() < 1e-12);
        assert!((f[3] - 0.1).abs() < 1e-12);
        assert!(ProtocolParams::from_fractions(0.479, 0.1, 6e9, [0.5, 0.2, 0.2, 0.2], 0.95)
            .is_err());
    }

    #[test]
    fn security_params_validation() {
        assert!(SecurityParams::new(0.9, 5.0, 1e-7).is_err());
        assert!(SecurityParams::new(1.16, -1.0, 1e-7).is_err());
        assert!(SecurityParams::new(1.16, 5.0, 0.0).is_err());
        // u_alpha = 0 is the asymptotic limit and must be constructible
        assert!(SecurityParams::new(1.0, 0.0, 1e-7).is_ok());
        let d = SecurityParams::default();
        assert_eq!(d.f, 1.16);
        assert_eq!(d.u_alpha, 5.0);
        assert_eq!(d.p_theta_x, 1e-7);
    }

    #[test]
    fn standard_params_validation() {
        assert!(StandardParams::new(0.479, 0.1, 1e9, 6e8, 3e8, 1e8).is_ok());
        assert!(StandardParams::new(0.479, 0.5, 1e9, 6e8, 3e8, 1e8).is_err());
        assert!(StandardParams::new(0.479, 0.1, 1e9, 6e8, 3e8, 2e8).is_err());
    }
}
