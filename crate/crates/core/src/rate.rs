//! Secure key rate assembly for the biased-basis protocol and for the
//! unbiased vacuum+weak baseline it is compared against.
//!
//! The rate per pulse sent is
//!
//! `R = q * ( -f Q_mu H(E_mu) + Q1_z [1 - H(e1_pz)] + Q_0 )`
//!
//! with the sift factor `q`, the measured gain/QBER in the error-correction
//! term, and the worst-case bounds in the privacy-amplification terms. A
//! phase-error bound at or above `1/2` yields no single-photon credit.

use crate::channel::{expected_observables, ChannelParams, ObservedStats};
use crate::decoy::{estimate_bounds, estimate_bounds_cells, BoundEstimates, BoundFlags, MeasuredCells};
use crate::math::{exp, h2};
use crate::params::{ProtocolParams, SecurityParams, StandardParams};
use crate::phase::{phase_error_upper, phase_error_upper_counts, PhaseErrorBound};
use crate::Result;

pub use crate::math::binary_entropy;

/// Key rate at one parameter point, with every intermediate retained for
/// audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    /// Secure bits per pulse sent; zero when the interior value is
    /// negative or the bounds collapsed.
    pub rate: f64,
    /// The interior value `q * (...)` before clamping at zero; negative
    /// values tell an optimizer which way is up.
    pub raw_rate: f64,
    /// Raw-data sift factor `q`.
    pub sift_q: f64,
    /// Error-correction cost per pulse, `f Q_mu H(E_mu)`.
    pub i_ec: f64,
    /// Single-photon gain lower bound.
    pub q1_z: f64,
    /// Background gain lower bound.
    pub q0: f64,
    /// Phase-error upper bound used in the privacy term.
    pub e1_pz_u: f64,
    /// Deviation solved by the tail bound (`NaN` when unsolved).
    pub theta_x: f64,
    /// Single-photon yield lower bound (audit).
    pub y1_l: f64,
    /// Single-photon bit-error upper bound before the deviation (audit).
    pub e1_u: f64,
    /// Whether every bound needed by the rate was available.
    pub feasible: bool,
    /// Clamp/starvation flags propagated from the estimators.
    pub flags: BoundFlags,
}

/// Raw-data sift factor of the biased scheme: `q = N_mu p_z / N_total`.
pub fn sift_factor(p: &ProtocolParams) -> f64 {
    p.n_mu * p.p_z / p.n_total
}

fn assemble(
    q: f64,
    q_mu: f64,
    e_mu: f64,
    bounds: &BoundEstimates,
    phase: &PhaseErrorBound,
    s: &SecurityParams,
) -> KeyRateReport {
    let i_ec = s.f * q_mu * h2(e_mu);
    let feasible = !bounds.flags.no_single_photon && phase.solved;
    let single_photon = if phase.e1_pz_u < 0.5 {
        bounds.q1_z_l * (1.0 - h2(phase.e1_pz_u))
    } else {
        0.0
    };
    let raw_rate = q * (-i_ec + single_photon + bounds.q0_l);
    let rate = if feasible { raw_rate.max(0.0) } else { 0.0 };
    KeyRateReport {
        rate,
        raw_rate,
        sift_q: q,
        i_ec,
        q1_z: bounds.q1_z_l,
        q0: bounds.q0_l,
        e1_pz_u: phase.e1_pz_u,
        theta_x: phase.theta_x,
        y1_l: bounds.y1_l,
        e1_u: bounds.e1_u,
        feasible,
        flags: bounds.flags,
    }
}

/// Key rate of the biased scheme from measured observables, decoy bounds
/// and the phase-error bound.
pub fn key_rate_biased(
    stats: &ObservedStats,
    bounds: &BoundEstimates,
    phase: &PhaseErrorBound,
    p: &ProtocolParams,
    s: &SecurityParams,
) -> KeyRateReport {
    assemble(sift_factor(p), stats.q_mu_z, stats.e_mu_z, bounds, phase, s)
}

/// Key rate of the standard unbiased vacuum+weak scheme.
///
/// Both parties choose bases uniformly; signal and decoy pulses are split
/// evenly, the key is extracted from both matched bases, and each basis
/// component runs the same bound machinery on its quarter of the data. By
/// symmetry the two components are identical, so the total sift factor is
/// `q = N_mu / (2 N_total)`.
pub fn key_rate_standard(
    stats: &ObservedStats,
    alloc: &StandardParams,
    s: &SecurityParams,
) -> Result<KeyRateReport> {
    let cells = MeasuredCells {
        sig_z: alloc.n_mu * 0.25,
        dec_z: alloc.n_nu * 0.25,
        dec_x: alloc.n_nu * 0.25,
        vac: alloc.n_0,
    };
    let bounds = estimate_bounds_cells(stats, &cells, alloc.mu, alloc.nu, s)?;
    let n_z = alloc.n_mu * 0.25 * bounds.y1_l * alloc.mu * exp(-alloc.mu);
    let n_x = alloc.n_nu * 0.25 * bounds.y1_l * alloc.nu * exp(-alloc.nu);
    let phase = phase_error_upper_counts(bounds.e1_u, n_x, n_z, s);
    let q = alloc.n_mu / (2.0 * alloc.n_total);
    Ok(assemble(q, stats.q_mu_z, stats.e_mu_z, &bounds, &phase, s))
}

/// Evaluate the biased scheme at one parameter point against the honest
/// channel: expected observables, decoy bounds, phase bound, key rate.
pub fn evaluate_biased(
    p: &ProtocolParams,
    ch: &ChannelParams,
    s: &SecurityParams,
) -> Result<KeyRateReport> {
    let stats = expected_observables(p.mu, p.nu, ch);
    let bounds = estimate_bounds(&stats, p, s)?;
    let phase = phase_error_upper(&bounds, p, s);
    Ok(key_rate_biased(&stats, &bounds, &phase, p, s))
}

/// Evaluate the standard scheme at one parameter point against the honest
/// channel.
pub fn evaluate_standard(
    alloc: &StandardParams,
    ch: &ChannelParams,
    s: &SecurityParams,
) -> Result<KeyRateReport> {
    let stats = expected_observables(alloc.mu, alloc.nu, ch);
    key_rate_standard(&stats, alloc, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_transmittance;

    fn table2_channel(eta: f64) -> ChannelParams {
        ChannelParams::new(eta, 1.7e-6, 0.033).unwrap()
    }

    #[test]
    fn sift_factor_cases() {
        let p = ProtocolParams::from_fractions(0.479, 0.1, 1e9, [1.0, 0.0, 0.0, 0.0], 1.0)
            .unwrap();
        assert_eq!(sift_factor(&p), 1.0);
        let p = ProtocolParams::from_fractions(0.479, 0.1, 1e9, [0.5, 0.2, 0.2, 0.1], 0.5)
            .unwrap();
        assert!((sift_factor(&p) - 0.25).abs() < 1e-15);
        let p = ProtocolParams::from_fractions(0.479, 0.1, 1e9, [0.8, 0.1, 0.05, 0.05], 0.95)
            .unwrap();
        assert!((sift_factor(&p) - 0.95 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn lossless_noiseless_limit() {
        // eta=1, y0=0, ed=0, f=1, u=0: with the ideal single-photon bounds
        // (Y1 = 1, no background) the assembly gives exactly q mu e^{-mu}
        let p = ProtocolParams::from_fractions(0.479, 0.1, 1e12, [0.25, 0.25, 0.25, 0.25], 0.9)
            .unwrap();
        let s = SecurityParams::new(1.0, 0.0, 1e-7).unwrap();
        let stats = ObservedStats {
            q_mu_z: -crate::math::expm1(-p.mu),
            e_mu_z: 0.0,
            q_nu_z: -crate::math::expm1(-p.nu),
            q_nu_x: -crate::math::expm1(-p.nu),
            eq_nu_x: 0.0,
            y0_obs: 0.0,
        };
        let bounds = BoundEstimates {
            q_mu_u: stats.q_mu_z,
            q_nu_l: stats.q_nu_z,
            y0_l: 0.0,
            q0_l: 0.0,
            eq_nu_x_u: 0.0,
            y1_l: 1.0,
            q1_z_l: p.mu * exp(-p.mu),
            e1_u: 0.0,
            flags: BoundFlags::default(),
        };
        let phase = PhaseErrorBound {
            e1_pz_u: 0.0,
            theta_x: 0.0,
            solved: true,
        };
        let rep = key_rate_biased(&stats, &bounds, &phase, &p, &s);
        let ideal = sift_factor(&p) * (p.mu * exp(-p.mu));
        assert!(rep.feasible);
        assert!(
            (rep.rate - ideal).abs() <= 1e-15 * ideal,
            "rate {} vs ideal {ideal}",
            rep.rate
        );

        // the full estimation pipeline approaches the same value once the
        // decoy intensity is small and the sample enormous
        let ch = ChannelParams::new(1.0, 0.0, 0.0).unwrap();
        let p = ProtocolParams::from_fractions(0.479, 1e-3, 1e24, [0.25, 0.25, 0.25, 0.25], 0.9)
            .unwrap();
        let rep = evaluate_biased(&p, &ch, &s).unwrap();
        let ideal = sift_factor(&p) * p.mu * exp(-p.mu);
        assert!(rep.feasible);
        assert!(
            (rep.rate - ideal).abs() < 1e-2 * ideal,
            "pipeline rate {} vs ideal {ideal}",
            rep.rate
        );
    }

    #[test]
    fn phase_bound_at_half_kills_single_photon_term() {
        let ch = table2_channel(0.1);
        let p = ProtocolParams::from_fractions(0.479, 0.1, 6e9, [0.5, 0.2, 0.2, 0.1], 0.95)
            .unwrap();
        let s = SecurityParams::default();
        let stats = expected_observables(p.mu, p.nu, &ch);
        let bounds = estimate_bounds(&stats, &p, &s).unwrap();
        let phase = PhaseErrorBound {
            e1_pz_u: 0.5,
            theta_x: 0.0,
            solved: true,
        };
        let rep = key_rate_biased(&stats, &bounds, &phase, &p, &s);
        let expected = sift_factor(&p) * (-rep.i_ec + bounds.q0_l);
        assert!((rep.raw_rate - expected).abs() < 1e-18);
        assert_eq!(rep.rate, 0.0); // error correction dwarfs the background gain
    }

    #[test]
    fn table2_regression_at_10db() {
        // frozen end-to-end fixture at a fixed parameter point
        let ch = table2_channel(db_to_transmittance(10.0).unwrap());
        let p = ProtocolParams::from_fractions(0.479, 0.1, 6e9, [0.5, 0.2, 0.2, 0.1], 0.95)
            .unwrap();
        let s = SecurityParams::default();
        let rep = evaluate_biased(&p, &ch, &s).unwrap();
        assert!(rep.feasible);
        assert!((rep.y1_l - 0.09716784314536779).abs() < 1e-10);
        assert!((rep.e1_u - 0.038701532312035866).abs() < 1e-10);
        assert!((rep.theta_x - 0.001272824993728371).abs() < 1e-9);
        assert!((rep.q1_z - 0.028829095665234394).abs() < 1e-10);
        assert!((rep.q0 - 7.114636706764066e-7).abs() < 1e-16);
        assert!((rep.i_ec - 0.011355978163724204).abs() < 1e-10);
        assert!((rep.rate - 0.0049837731894025825).abs() < 1e-10);
    }

    #[test]
    fn infeasible_bounds_zero_the_rate() {
        let ch = table2_channel(1e-6);
        // tiny pulse budget: everything starves
        let p = ProtocolParams::from_fractions(0.479, 0.1, 1e4, [0.5, 0.2, 0.2, 0.1], 0.95)
            .unwrap();
        let s = SecurityParams::default();
        let rep = evaluate_biased(&p, &ch, &s).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.rate, 0.0);
    }

    #[test]
    fn negative_interior_retained() {
        // moderate loss but absurdly small key budget: bounds survive but
        // the bracket goes negative
        let ch = table2_channel(db_to_transmittance(25.0).unwrap());
        let p = ProtocolParams::from_fractions(0.479, 0.1, 3e7, [0.5, 0.2, 0.2, 0.1], 0.95)
            .unwrap();
        let s = SecurityParams::default();
        let rep = evaluate_biased(&p, &ch, &s).unwrap();
        if rep.feasible {
            assert!(rep.raw_rate < 0.0, "expected negative interior, got {}", rep.raw_rate);
            assert_eq!(rep.rate, 0.0);
        } else {
            assert_eq!(rep.rate, 0.0);
        }
    }

    #[test]
    fn biased_beats_standard_at_matched_point() {
        let ch = table2_channel(db_to_transmittance(10.0).unwrap());
        let s = SecurityParams::default();
        let p = ProtocolParams::from_fractions(0.479, 0.1, 6e9, [0.7, 0.1, 0.1, 0.1], 0.95)
            .unwrap();
        let biased = evaluate_biased(&p, &ch, &s).unwrap();
        let alloc = StandardParams::from_fractions(0.479, 0.1, 6e9, [0.7, 0.2, 0.1]).unwrap();
        let standard = evaluate_standard(&alloc, &ch, &s).unwrap();
        assert!(biased.rate > standard.rate);
        assert!(standard.rate > 0.0);
    }

    #[test]
    fn standard_scheme_sift_factor() {
        let ch = table2_channel(0.1);
        let s = SecurityParams::default();
        let alloc = StandardParams::from_fractions(0.479, 0.1, 6e9, [0.6, 0.3, 0.1]).unwrap();
        let rep = evaluate_standard(&alloc, &ch, &s).unwrap();
        assert!((rep.sift_q - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rate_is_continuous_near_operating_point() {
        // finite-difference scan: steps of 1e-6 in each direction must not
        // jump the rate by more than 1e-6
        let s = SecurityParams::default();
        let base_eta = db_to_transmittance(10.0).unwrap();
        let eval = |mu: f64, nu: f64, pz: f64, eta: f64| -> f64 {
            let ch = table2_channel(eta);
            let p = ProtocolParams::from_fractions(mu, nu, 6e9, [0.5, 0.2, 0.2, 0.1], pz)
                .unwrap();
            evaluate_biased(&p, &ch, &s).unwrap().rate
        };
        let base = eval(0.479, 0.1, 0.95, base_eta);
        let step = 1e-6;
        let neighbours = [
            eval(0.479 + step, 0.1, 0.95, base_eta),
            eval(0.479, 0.1 + step, 0.95, base_eta),
            eval(0.479, 0.1, 0.95 + step, base_eta),
            eval(0.479, 0.1, 0.95, base_eta + step),
        ];
        for (i, n) in neighbours.iter().enumerate() {
            assert!(
                (n - base).abs() <= 1e-6,
                "jump of {} in direction {i}",
                (n - base).abs()
            );
        }
    }

    proptest::proptest! {
        // the rate is never negative and never exceeds the sift factor
        #[test]
        fn rate_within_physical_range(
            loss_db in 0.0f64..45.0,
            nu_frac in 0.05f64..0.95,
            pz in 0.5f64..0.999,
            a_mu in 0.1f64..0.9,
        ) {
            let mu = 0.479;
            let rest = 1.0 - a_mu;
            let ch = table2_channel(db_to_transmittance(loss_db).unwrap());
            let p = ProtocolParams::from_fractions(
                mu, nu_frac * mu, 6e9,
                [a_mu, rest * 0.4, rest * 0.4, rest * 0.2], pz,
            ).unwrap();
            let rep = evaluate_biased(&p, &ch, &SecurityParams::default()).unwrap();
            proptest::prop_assert!(rep.rate >= 0.0);
            proptest::prop_assert!(rep.rate <= rep.sift_q);
        }
    }
}
