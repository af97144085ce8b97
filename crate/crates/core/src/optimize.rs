//! Deterministic maximization of the key rate over the protocol parameters
//! at each channel loss.
//!
//! Two stages: a coarse structured grid over every free axis seeds a small
//! number of Nelder-Mead descents whose iterates are projected back onto
//! the constraint set (intensity ordering, basis-bias interval, allocation
//! simplex). No randomness is involved anywhere, ties are broken by
//! lexicographic parameter order, and per-start budgets are fixed, so
//! identical inputs give bit-identical results and adding a warm start can
//! only improve the outcome.

use alloc::vec::Vec;

use crate::channel::{db_to_transmittance, ChannelParams};
use crate::params::{ProtocolParams, SecurityParams, StandardParams};
use crate::rate::{evaluate_biased, evaluate_standard, KeyRateReport};
use crate::{Error, Result};

/// Total evaluation ceiling for one `optimize_at_loss` call.
const EVAL_BUDGET: u64 = 10_000;
/// Per-descent evaluation budget (fixed so that adding a start never
/// changes the other descents).
const NM_BUDGET: u64 = 2_300;
/// Reduced per-descent budget when the signal intensity is also searched
/// (the coarse stage is five times larger).
const NM_BUDGET_MU: u64 = 1_700;
/// Rate improvement below which an iteration counts as stalled.
const IMPROVEMENT_TOL: f64 = 1e-10;
/// Consecutive stalled iterations before a descent stops.
const STALL_ITERS: u32 = 20;
/// Number of coarse-grid points promoted to descents.
const TOP_STARTS: usize = 3;
/// Maximum optimization vector dimension (biased scheme with free mu).
const MAX_DIM: usize = 7;

/// Which protocol the optimizer is tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Biased-basis protocol: free `nu`, `p_z` and the four-way allocation.
    Biased,
    /// Unbiased vacuum+weak baseline: free `nu` and the three-way
    /// allocation, bases fixed at 1/2.
    Standard,
}

/// Optimized parameter set, tagged by scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeParams {
    /// Parameters of the biased protocol.
    Biased(ProtocolParams),
    /// Parameters of the unbiased baseline.
    Standard(StandardParams),
}

/// Search domain. Any interval may be collapsed to a point to pin that
/// parameter, and the allocation may be fixed outright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    /// Decoy intensity interval within `(0, mu)`.
    pub nu_range: (f64, f64),
    /// Receiver Z-bias interval within `[0.5, 1]` (biased scheme only).
    pub pz_range: (f64, f64),
    /// Signal intensity interval; `None` keeps `mu` fixed.
    pub mu_range: Option<(f64, f64)>,
    /// Fixed allocation fractions `[a_mu, a_nu_z, a_nu_x, a_0]`; `None`
    /// searches the simplex. The baseline merges the two decoy entries.
    pub alloc: Option<[f64; 4]>,
    /// Minimum fraction allowed for any allocation entry.
    pub alloc_floor: f64,
}

impl SearchSpace {
    /// Full default search at fixed signal intensity `mu`.
    pub fn new(mu: f64) -> Self {
        Self {
            nu_range: (1e-3, mu * (1.0 - 1e-6)),
            pz_range: (0.5 + 1e-6, 1.0 - 1e-6),
            mu_range: None,
            alloc: None,
            alloc_floor: 0.0,
        }
    }

    /// Check the space against the signal intensity it will be used with.
    pub fn validate(&self, mu: f64) -> Result<()> {
        let mu_hi = self.mu_range.map_or(mu, |r| r.1);
        if let Some((lo, hi)) = self.mu_range {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::EmptyFeasibleRegion("mu_range"));
            }
        }
        let (lo, hi) = self.nu_range;
        if !(lo > 0.0 && lo <= hi && lo < mu_hi) {
            return Err(Error::EmptyFeasibleRegion("nu_range"));
        }
        let (lo, hi) = self.pz_range;
        if !(lo >= 0.5 && lo <= hi && hi <= 1.0) {
            return Err(Error::EmptyFeasibleRegion("pz_range"));
        }
        if !(0.0..0.25).contains(&self.alloc_floor) {
            return Err(Error::EmptyFeasibleRegion("alloc_floor"));
        }
        if let Some(fracs) = self.alloc {
            if fracs.iter().any(|f| *f < 0.0)
                || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::EmptyFeasibleRegion("alloc"));
            }
        }
        Ok(())
    }
}

/// Inputs shared by every loss point of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanInputs {
    /// Background count rate.
    pub y0: f64,
    /// Misalignment error probability.
    pub ed: f64,
    /// Security knobs.
    pub security: SecurityParams,
    /// Total pulses sent.
    pub n_total: f64,
    /// Signal intensity (the fixed value, or the descent origin when
    /// `mu_range` is searched).
    pub mu: f64,
}

/// Result of one per-loss optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    /// The maximizing parameters.
    pub best_params: SchemeParams,
    /// Key rate at `best_params`.
    pub best_rate: f64,
    /// Full report at `best_params`.
    pub report: KeyRateReport,
    /// Objective evaluations consumed.
    pub evaluations: u64,
    /// Whether the best descent stopped on the improvement criterion
    /// rather than the evaluation budget.
    pub converged: bool,
}

/// One row of a loss scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    /// Channel loss in dB.
    pub loss_db: f64,
    /// Biased-scheme optimum, when requested.
    pub biased: Option<OptResult>,
    /// Baseline optimum, when requested.
    pub standard: Option<OptResult>,
}

/// Scheme selection for a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeSelection {
    /// Optimize only the biased scheme.
    Biased,
    /// Optimize only the baseline.
    Standard,
    /// Optimize both.
    Both,
}

impl SchemeSelection {
    fn biased(self) -> bool {
        matches!(self, Self::Biased | Self::Both)
    }
    fn standard(self) -> bool {
        matches!(self, Self::Standard | Self::Both)
    }
}

#[derive(Clone, Copy)]
struct Eval {
    rate: f64,
    x: [f64; MAX_DIM],
    params: SchemeParams,
    report: KeyRateReport,
}

/// `a` strictly better than `b`: higher rate, ties broken by
/// lexicographically smaller projected parameters.
fn better(a: &Eval, b: &Eval) -> bool {
    if a.rate != b.rate {
        return a.rate > b.rate;
    }
    for i in 0..MAX_DIM {
        match a.x[i].total_cmp(&b.x[i]) {
            core::cmp::Ordering::Less => return true,
            core::cmp::Ordering::Greater => return false,
            core::cmp::Ordering::Equal => {}
        }
    }
    false
}

struct Problem<'a> {
    scheme: Scheme,
    ch: ChannelParams,
    inputs: &'a ScanInputs,
    space: &'a SearchSpace,
    dim: usize,
    evals: u64,
}

impl<'a> Problem<'a> {
    fn new(
        loss_db: f64,
        inputs: &'a ScanInputs,
        space: &'a SearchSpace,
        scheme: Scheme,
    ) -> Result<Self> {
        space.validate(inputs.mu)?;
        let eta = db_to_transmittance(loss_db)?;
        let ch = ChannelParams::new(eta, inputs.y0, inputs.ed)?;
        let dim = match scheme {
            Scheme::Biased => 7,
            Scheme::Standard => 5,
        };
        Ok(Self {
            scheme,
            ch,
            inputs,
            space,
            dim,
            evals: 0,
        })
    }

    /// Project a raw vector onto the feasible set. Layout:
    /// biased `[mu, nu, pz, a_mu, a_nu_z, a_nu_x, a_0]`,
    /// standard `[mu, nu, a_mu, a_nu, a_0]`; unused tail entries are zero.
    fn project(&self, x: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut p = [0.0; MAX_DIM];
        let mu = match self.space.mu_range {
            Some((lo, hi)) => x[0].clamp(lo, hi),
            None => self.inputs.mu,
        };
        p[0] = mu;
        let (nu_lo, nu_hi) = self.space.nu_range;
        let nu_cap = mu * (1.0 - 1e-9);
        p[1] = x[1].clamp(nu_lo.min(nu_cap), nu_hi.min(nu_cap));
        let (alloc_start, n_fracs) = match self.scheme {
            Scheme::Biased => {
                let (lo, hi) = self.space.pz_range;
                p[2] = x[2].clamp(lo, hi);
                (3usize, 4usize)
            }
            Scheme::Standard => (2usize, 3usize),
        };
        let fixed = self.space.alloc.map(|a| match self.scheme {
            Scheme::Biased => [a[0], a[1], a[2], a[3]],
            Scheme::Standard => [a[0], a[1] + a[2], a[3], 0.0],
        });
        match fixed {
            Some(a) => {
                p[alloc_start..alloc_start + n_fracs].copy_from_slice(&a[..n_fracs]);
            }
            None => {
                let mut sum = 0.0;
                for i in 0..n_fracs {
                    let f = x[alloc_start + i].max(self.space.alloc_floor);
                    p[alloc_start + i] = f;
                    sum += f;
                }
                if sum <= 0.0 {
                    let uniform = 1.0 / n_fracs as f64;
                    for i in 0..n_fracs {
                        p[alloc_start + i] = uniform;
                    }
                } else {
                    for i in 0..n_fracs {
                        p[alloc_start + i] /= sum;
                    }
                }
            }
        }
        p
    }

    fn params_at(&self, p: &[f64; MAX_DIM]) -> Result<SchemeParams> {
        match self.scheme {
            Scheme::Biased => Ok(SchemeParams::Biased(ProtocolParams::from_fractions(
                p[0],
                p[1],
                self.inputs.n_total,
                [p[3], p[4], p[5], p[6]],
                p[2],
            )?)),
            Scheme::Standard => Ok(SchemeParams::Standard(StandardParams::from_fractions(
                p[0],
                p[1],
                self.inputs.n_total,
                [p[2], p[3], p[4]],
            )?)),
        }
    }

    fn evaluate(&mut self, x: &[f64; MAX_DIM]) -> Result<Eval> {
        self.evals += 1;
        let proj = self.project(x);
        let params = self.params_at(&proj)?;
        let report = match &params {
            SchemeParams::Biased(p) => evaluate_biased(p, &self.ch, &self.inputs.security)?,
            SchemeParams::Standard(a) => evaluate_standard(a, &self.ch, &self.inputs.security)?,
        };
        Ok(Eval {
            rate: report.rate,
            x: proj,
            params,
            report,
        })
    }

    fn coarse_candidates(&self) -> Vec<[f64; MAX_DIM]> {
        let mu_values: Vec<f64> = match self.space.mu_range {
            Some((lo, hi)) => (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect(),
            None => alloc::vec![self.inputs.mu],
        };
        let mut out = Vec::new();
        for &mu in &mu_values {
            let mut nu_values: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.5]
                .iter()
                .map(|f| {
                    let cap = mu * (1.0 - 1e-9);
                    (f * mu).clamp(self.space.nu_range.0.min(cap), self.space.nu_range.1.min(cap))
                })
                .collect();
            nu_values.dedup();
            match self.scheme {
                Scheme::Biased => {
                    let mut pz_values: Vec<f64> = [0.55f64, 0.65, 0.75, 0.85, 0.95]
                        .iter()
                        .map(|v| v.clamp(self.space.pz_range.0, self.space.pz_range.1))
                        .collect();
                    pz_values.dedup();
                    let allocs = self.biased_allocs();
                    for &nu in &nu_values {
                        for &pz in &pz_values {
                            for a in &allocs {
                                out.push([mu, nu, pz, a[0], a[1], a[2], a[3]]);
                            }
                        }
                    }
                }
                Scheme::Standard => {
                    let allocs = self.standard_allocs();
                    for &nu in &nu_values {
                        for a in &allocs {
                            out.push([mu, nu, a[0], a[1], a[2], 0.0, 0.0]);
                        }
                    }
                }
            }
        }
        out
    }

    fn biased_allocs(&self) -> Vec<[f64; 4]> {
        if let Some(a) = self.space.alloc {
            return alloc::vec![a];
        }
        let splits = [
            [0.45, 0.45, 0.10],
            [0.25, 0.60, 0.15],
            [0.60, 0.25, 0.15],
            [0.15, 0.25, 0.60],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ];
        let mut out = Vec::with_capacity(25);
        for a_mu in [0.3, 0.5, 0.7, 0.85, 0.95] {
            let rest = 1.0 - a_mu;
            for s in splits {
                out.push([a_mu, rest * s[0], rest * s[1], rest * s[2]]);
            }
        }
        out
    }

    fn standard_allocs(&self) -> Vec<[f64; 3]> {
        if let Some(a) = self.space.alloc {
            return alloc::vec![[a[0], a[1] + a[2], a[3]]];
        }
        let mut out = Vec::with_capacity(25);
        for a_mu in [0.3, 0.5, 0.7, 0.85, 0.95] {
            let rest = 1.0 - a_mu;
            for share in [0.9, 0.7, 0.5, 0.3, 0.1] {
                out.push([a_mu, rest * share, rest * (1.0 - share)]);
            }
        }
        out
    }

    /// Initial simplex steps, scaled to each axis.
    fn steps(&self) -> [f64; MAX_DIM] {
        let mut s = [0.0; MAX_DIM];
        s[0] = match self.space.mu_range {
            Some((lo, hi)) => 0.1 * (hi - lo),
            None => 0.0,
        };
        s[1] = 0.1 * (self.space.nu_range.1 - self.space.nu_range.0).min(self.inputs.mu * 0.3);
        match self.scheme {
            Scheme::Biased => {
                s[2] = 0.1 * (self.space.pz_range.1 - self.space.pz_range.0);
                if self.space.alloc.is_none() {
                    s[3..7].fill(0.05);
                }
            }
            Scheme::Standard => {
                if self.space.alloc.is_none() {
                    s[2..5].fill(0.05);
                }
            }
        }
        s
    }
}

/// Nelder-Mead descent from `start`, constrained by projection inside the
/// objective. Returns the best evaluation seen and whether the descent
/// stopped on the improvement criterion.
fn descend(problem: &mut Problem<'_>, start: &Eval, budget: u64) -> Result<(Eval, bool)> {
    let dim = problem.dim;
    let steps = problem.steps();
    let start_evals = problem.evals;
    let mut best = *start;

    let mut simplex: Vec<([f64; MAX_DIM], Eval)> = Vec::with_capacity(dim + 1);
    simplex.push((start.x, *start));
    for i in 0..dim {
        if problem.evals - start_evals >= budget {
            return Ok((best, false));
        }
        let mut x = start.x;
        x[i] += steps[i];
        let e = problem.evaluate(&x)?;
        if better(&e, &best) {
            best = e;
        }
        simplex.push((x, e));
    }

    let sort = |s: &mut Vec<([f64; MAX_DIM], Eval)>| {
        s.sort_by(|a, b| {
            if better(&a.1, &b.1) {
                core::cmp::Ordering::Less
            } else if better(&b.1, &a.1) {
                core::cmp::Ordering::Greater
            } else {
                core::cmp::Ordering::Equal
            }
        });
    };

    let mut stall = 0u32;
    loop {
        sort(&mut simplex);
        let iter_best = simplex[0].1.rate;

        if problem.evals - start_evals >= budget {
            return Ok((best, false));
        }

        // centroid of all vertices but the worst
        let mut centroid = [0.0; MAX_DIM];
        for (x, _) in simplex.iter().take(dim) {
            for k in 0..dim {
                centroid[k] += x[k] / dim as f64;
            }
        }
        let worst = simplex[dim].0;
        let mut reflected = [0.0; MAX_DIM];
        let mut expanded = [0.0; MAX_DIM];
        for k in 0..dim {
            reflected[k] = centroid[k] + (centroid[k] - worst[k]);
            expanded[k] = centroid[k] + 2.0 * (centroid[k] - worst[k]);
        }

        let er = problem.evaluate(&reflected)?;
        if better(&er, &best) {
            best = er;
        }

        if better(&er, &simplex[0].1) {
            // try to expand
            if problem.evals - start_evals < budget {
                let ee = problem.evaluate(&expanded)?;
                if better(&ee, &best) {
                    best = ee;
                }
                if better(&ee, &er) {
                    simplex[dim] = (expanded, ee);
                } else {
                    simplex[dim] = (reflected, er);
                }
            } else {
                simplex[dim] = (reflected, er);
            }
        } else if better(&er, &simplex[dim - 1].1) {
            simplex[dim] = (reflected, er);
        } else {
            // contract toward the better of worst/reflected
            let outside = better(&er, &simplex[dim].1);
            let towards = if outside { reflected } else { worst };
            let mut contracted = [0.0; MAX_DIM];
            for k in 0..dim {
                contracted[k] = centroid[k] + 0.5 * (towards[k] - centroid[k]);
            }
            if problem.evals - start_evals >= budget {
                return Ok((best, false));
            }
            let ec = problem.evaluate(&contracted)?;
            if better(&ec, &best) {
                best = ec;
            }
            let accept = if outside {
                better(&ec, &er)
            } else {
                better(&ec, &simplex[dim].1)
            };
            if accept {
                simplex[dim] = (contracted, ec);
            } else if outside {
                simplex[dim] = (reflected, er);
            } else {
                // shrink toward the best vertex
                let anchor = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    if problem.evals - start_evals >= budget {
                        return Ok((best, false));
                    }
                    let mut x = [0.0; MAX_DIM];
                    for k in 0..dim {
                        x[k] = anchor[k] + 0.5 * (entry.0[k] - anchor[k]);
                    }
                    let e = problem.evaluate(&x)?;
                    if better(&e, &best) {
                        best = e;
                    }
                    *entry = (x, e);
                }
            }
        }

        sort(&mut simplex);
        if simplex[0].1.rate - iter_best < IMPROVEMENT_TOL {
            stall += 1;
            if stall >= STALL_ITERS {
                return Ok((best, true));
            }
        } else {
            stall = 0;
        }
    }
}

fn warm_vector(warm: &SchemeParams, scheme: Scheme) -> Result<[f64; MAX_DIM]> {
    match (warm, scheme) {
        (SchemeParams::Biased(p), Scheme::Biased) => {
            let f = p.fractions();
            Ok([p.mu, p.nu, p.p_z, f[0], f[1], f[2], f[3]])
        }
        (SchemeParams::Standard(a), Scheme::Standard) => {
            let f = a.fractions();
            Ok([a.mu, a.nu, f[0], f[1], f[2], 0.0, 0.0])
        }
        _ => Err(Error::Domain("warm start scheme does not match")),
    }
}

/// Maximize the key rate at one channel loss.
///
/// Deterministic: a structured coarse grid (at least five points per free
/// axis) is evaluated, the best [`TOP_STARTS`] points plus the optional
/// warm start each seed a projected Nelder-Mead descent with a fixed
/// per-descent budget, and the best evaluation overall wins. The total
/// evaluation count stays below 10^4.
pub fn optimize_at_loss(
    loss_db: f64,
    inputs: &ScanInputs,
    space: &SearchSpace,
    scheme: Scheme,
    warm: Option<&SchemeParams>,
) -> Result<OptResult> {
    let mut problem = Problem::new(loss_db, inputs, space, scheme)?;

    let candidates = problem.coarse_candidates();
    debug_assert!(candidates.len() as u64 <= EVAL_BUDGET / 2);
    let mut coarse: Vec<Eval> = Vec::with_capacity(candidates.len());
    for x in &candidates {
        coarse.push(problem.evaluate(x)?);
    }

    // top distinct starts by (rate, lexicographic) order
    let mut starts: Vec<Eval> = Vec::with_capacity(TOP_STARTS + 1);
    for e in &coarse {
        match starts.iter().position(|s| better(e, s)) {
            Some(pos) => {
                starts.insert(pos, *e);
                starts.truncate(TOP_STARTS);
            }
            None if starts.len() < TOP_STARTS => starts.push(*e),
            None => {}
        }
    }
    if let Some(w) = warm {
        let x = warm_vector(w, scheme)?;
        starts.push(problem.evaluate(&x)?);
    }

    let budget = if space.mu_range.is_some() && scheme == Scheme::Biased {
        NM_BUDGET_MU
    } else {
        NM_BUDGET
    };

    let mut best: Option<(Eval, bool)> = None;
    for s in &starts {
        let (e, converged) = descend(&mut problem, s, budget)?;
        best = match best {
            Some((cur, cur_conv)) if !better(&e, &cur) => Some((cur, cur_conv)),
            _ => Some((e, converged)),
        };
    }
    let (e, converged) = best.ok_or(Error::EmptyFeasibleRegion("no coarse candidates"))?;

    Ok(OptResult {
        best_params: e.params,
        best_rate: e.rate,
        report: e.report,
        evaluations: problem.evals,
        converged,
    })
}

/// Optimize both schemes over a grid of losses, warm-starting each point
/// from the previous optimum of the same scheme.
pub fn scan_losses(
    grid: &[f64],
    inputs: &ScanInputs,
    space: &SearchSpace,
    selection: SchemeSelection,
) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::Domain("loss grid must be nonempty"));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut warm_biased: Option<SchemeParams> = None;
    let mut warm_standard: Option<SchemeParams> = None;
    for &loss_db in grid {
        let biased = if selection.biased() {
            let r = optimize_at_loss(loss_db, inputs, space, Scheme::Biased, warm_biased.as_ref())?;
            warm_biased = Some(r.best_params);
            Some(r)
        } else {
            None
        };
        let standard = if selection.standard() {
            let r = optimize_at_loss(
                loss_db,
                inputs,
                space,
                Scheme::Standard,
                warm_standard.as_ref(),
            )?;
            warm_standard = Some(r.best_params);
            Some(r)
        } else {
            None
        };
        out.push(ScanPoint {
            loss_db,
            biased,
            standard,
        });
    }
    Ok(out)
}
