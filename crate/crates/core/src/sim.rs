//! Pulse-level Monte Carlo oracle for the protocol.
//!
//! Simulates the pulse allocation table against the honest photon-number
//! channel (or a configured adversary) and tallies per-cell detection and
//! error counts, plus hidden per-photon-number ground truth that lets tests
//! verify the decoy bounds empirically.
//!
//! Pulses are processed in fixed-size blocks with one counter-based RNG
//! stream per block, derived from the master seed. The block decomposition
//! depends only on the pulse count, never on scheduling, so merged counts
//! are identical no matter how many workers process the blocks.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::channel::{ChannelParams, ObservedStats};
use crate::math::exp;
use crate::params::ProtocolParams;
use crate::{Error, Result};

/// Pulses per RNG block.
pub const BLOCK_LEN: u64 = 1 << 20;

/// Detection/error tables are precomputed up to this photon number;
/// larger values (vanishingly rare for weak pulses) are computed directly.
const TABLE_N: usize = 33;

/// What Alice sent: the intensity class determines her basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseClass {
    /// Signal pulse, intensity `mu`, Z basis.
    Signal,
    /// Decoy pulse, intensity `nu`, Z basis.
    DecoyZ,
    /// Decoy pulse, intensity `nu`, X basis.
    DecoyX,
    /// Vacuum pulse, no basis.
    Vacuum,
}

impl PulseClass {
    /// All classes in allocation order.
    pub const ALL: [PulseClass; 4] = [
        PulseClass::Signal,
        PulseClass::DecoyZ,
        PulseClass::DecoyX,
        PulseClass::Vacuum,
    ];

    /// Alice's preparation basis, if any.
    pub fn alice_basis(self) -> Option<MeasBasis> {
        match self {
            PulseClass::Signal | PulseClass::DecoyZ => Some(MeasBasis::Z),
            PulseClass::DecoyX => Some(MeasBasis::X),
            PulseClass::Vacuum => None,
        }
    }

    fn intensity(self, p: &ProtocolParams) -> f64 {
        match self {
            PulseClass::Signal => p.mu,
            PulseClass::DecoyZ | PulseClass::DecoyX => p.nu,
            PulseClass::Vacuum => 0.0,
        }
    }

    fn index(self) -> usize {
        match self {
            PulseClass::Signal => 0,
            PulseClass::DecoyZ => 1,
            PulseClass::DecoyX => 2,
            PulseClass::Vacuum => 3,
        }
    }
}

/// Measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasBasis {
    /// Rectilinear (key) basis.
    Z,
    /// Diagonal (test) basis.
    X,
}

/// Counts for one (class, receiver-basis) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellTally {
    /// Pulses sent into this cell.
    pub sent: u64,
    /// Detections.
    pub detected: u64,
    /// Errors among detections.
    pub errors: u64,
}

/// Hidden ground truth for one photon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhotonTally {
    /// Pulses that left the source with this photon number.
    pub sent: u64,
    /// Detections among them (any basis).
    pub detected: u64,
    /// Detections in basis-matched Z cells.
    pub z_matched_detected: u64,
    /// Errors in basis-matched Z cells.
    pub z_matched_errors: u64,
    /// Detections in basis-matched X cells.
    pub x_matched_detected: u64,
    /// Errors in basis-matched X cells.
    pub x_matched_errors: u64,
}

/// Tallies of a simulation run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimCounts {
    cells: [CellTally; 8],
    photon: Vec<PhotonTally>,
    /// Total pulses simulated.
    pub pulses: u64,
}

impl SimCounts {
    /// Counts for one (class, receiver-basis) cell.
    pub fn cell(&self, class: PulseClass, basis: MeasBasis) -> &CellTally {
        &self.cells[class.index() * 2 + (basis == MeasBasis::X) as usize]
    }

    fn cell_mut(&mut self, class: PulseClass, basis: MeasBasis) -> &mut CellTally {
        &mut self.cells[class.index() * 2 + (basis == MeasBasis::X) as usize]
    }

    /// Hidden per-photon-number ground truth (index = photon number).
    /// Not consumed by any estimator; exists so tests can check the decoy
    /// bounds against what actually happened.
    pub fn photon_truth(&self) -> &[PhotonTally] {
        &self.photon
    }

    /// Iterate all cells in a fixed order.
    pub fn iter_cells(&self) -> impl Iterator<Item = (PulseClass, MeasBasis, &CellTally)> {
        PulseClass::ALL.into_iter().flat_map(move |class| {
            [MeasBasis::Z, MeasBasis::X]
                .into_iter()
                .map(move |basis| (class, basis, self.cell(class, basis)))
        })
    }

    /// Fold another run into this one.
    pub fn merge(&mut self, other: &SimCounts) {
        for (a, b) in self.cells.iter_mut().zip(other.cells.iter()) {
            a.sent += b.sent;
            a.detected += b.detected;
            a.errors += b.errors;
        }
        if self.photon.len() < other.photon.len() {
            self.photon.resize(other.photon.len(), PhotonTally::default());
        }
        for (a, b) in self.photon.iter_mut().zip(other.photon.iter()) {
            a.sent += b.sent;
            a.detected += b.detected;
            a.z_matched_detected += b.z_matched_detected;
            a.z_matched_errors += b.z_matched_errors;
            a.x_matched_detected += b.x_matched_detected;
            a.x_matched_errors += b.x_matched_errors;
        }
        self.pulses += other.pulses;
    }

    fn photon_mut(&mut self, n: u32) -> &mut PhotonTally {
        let n = n as usize;
        if self.photon.len() <= n {
            self.photon.resize(n + 1, PhotonTally::default());
        }
        &mut self.photon[n]
    }
}

/// Per-photon-number yield/error override, keyed by the pulse's
/// preparation basis. Basis-free vacuum pulses use the Z column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldOverrideEntry {
    /// Detection probability for Z-prepared pulses.
    pub yield_z: f64,
    /// Conditional error probability for matched-basis Z detections.
    pub err_z: f64,
    /// Detection probability for X-prepared pulses.
    pub yield_x: f64,
    /// Conditional error probability for matched-basis X detections.
    pub err_x: f64,
}

/// Eavesdropping model applied to the channel.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryConfig {
    /// Honest channel.
    None,
    /// Eve measures every pulse in Z and resends: no extra Z-basis errors,
    /// X-basis outcomes become coin flips.
    InterceptResendZ,
    /// Per-photon-number yield/error table (entries beyond the table fall
    /// back to the honest channel).
    YieldOverride(Vec<YieldOverrideEntry>),
}

impl AdversaryConfig {
    fn validate(&self) -> Result<()> {
        if let AdversaryConfig::YieldOverride(table) = self {
            for e in table {
                for v in [e.yield_z, e.err_z, e.yield_x, e.err_x] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Domain("override probabilities must lie in [0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n_pulses` over the allocation
/// fractions; totals match the configured shares exactly.
fn apportion(n_pulses: u64, fractions: [f64; 4]) -> [u64; 4] {
    let mut counts = [0u64; 4];
    let mut rema: [(f64, usize); 4] = [(0.0, 0); 4];
    let mut assigned = 0u64;
    for (i, f) in fractions.iter().enumerate() {
        let exact = f * n_pulses as f64;
        let floor = exact as u64;
        counts[i] = floor;
        assigned += floor;
        rema[i] = (exact - floor as f64, i);
    }
    // hand out the remainder to the largest fractional parts, ties by index
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = n_pulses - assigned;
    let mut k = 0;
    while left > 0 {
        counts[rema[k % 4].1] += 1;
        left -= 1;
        k += 1;
    }
    counts
}

struct PulsePlan {
    /// Cumulative class boundaries over the global pulse index space.
    bounds: [u64; 4],
    n_pulses: u64,
}

impl PulsePlan {
    fn new(p: &ProtocolParams, n_pulses: u64) -> Self {
        let counts = apportion(n_pulses, p.fractions());
        let mut bounds = [0u64; 4];
        let mut acc = 0;
        for i in 0..4 {
            acc += counts[i];
            bounds[i] = acc;
        }
        Self { bounds, n_pulses }
    }

    fn class_of(&self, pulse: u64) -> PulseClass {
        for (i, class) in PulseClass::ALL.into_iter().enumerate() {
            if pulse < self.bounds[i] {
                return class;
            }
        }
        PulseClass::Vacuum
    }
}

struct ChannelTables {
    /// Detection probability per photon number, per preparation basis
    /// (index 0 = Z or basis-free, 1 = X).
    yields: [[f64; TABLE_N]; 2],
    /// Conditional matched-basis error probability per photon number.
    errors: [[f64; TABLE_N]; 2],
    /// X-matched outcomes are coin flips regardless of photon number.
    x_is_coin_flip: bool,
}

impl ChannelTables {
    fn build(ch: &ChannelParams, adv: &AdversaryConfig) -> Self {
        let mut yields = [[0.0; TABLE_N]; 2];
        let mut errors = [[0.0; TABLE_N]; 2];
        for n in 0..TABLE_N {
            let y = crate::channel::yield_i(n as u32, ch);
            let ey = crate::channel::error_yield_i(n as u32, ch);
            let e = if y > 0.0 { ey / y } else { 0.0 };
            for b in 0..2 {
                yields[b][n] = y;
                errors[b][n] = e;
            }
        }
        if let AdversaryConfig::YieldOverride(table) = adv {
            for (n, o) in table.iter().enumerate().take(TABLE_N) {
                yields[0][n] = o.yield_z;
                errors[0][n] = o.err_z;
                yields[1][n] = o.yield_x;
                errors[1][n] = o.err_x;
            }
        }
        Self {
            yields,
            errors,
            x_is_coin_flip: matches!(adv, AdversaryConfig::InterceptResendZ),
        }
    }

    fn detect_prob(&self, n: u32, basis: Option<MeasBasis>, ch: &ChannelParams) -> f64 {
        let b = (basis == Some(MeasBasis::X)) as usize;
        match self.yields[b].get(n as usize) {
            Some(y) => *y,
            None => crate::channel::yield_i(n, ch),
        }
    }

    fn matched_error_prob(&self, n: u32, basis: MeasBasis, ch: &ChannelParams) -> f64 {
        if basis == MeasBasis::X && self.x_is_coin_flip {
            return 0.5;
        }
        let b = (basis == MeasBasis::X) as usize;
        match self.errors[b].get(n as usize) {
            Some(e) => *e,
            None => {
                let y = crate::channel::yield_i(n, ch);
                if y > 0.0 {
                    crate::channel::error_yield_i(n, ch) / y
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF Poisson sampler; fine for the weak intensities used here.
#[inline]
fn sample_poisson(mu: f64, exp_neg_mu: f64, u: f64) -> u32 {
    if mu == 0.0 {
        return 0;
    }
    let mut n = 0u32;
    let mut pmf = exp_neg_mu;
    let mut cdf = pmf;
    while u >= cdf && n < 500 {
        n += 1;
        pmf *= mu / n as f64;
        cdf += pmf;
    }
    n
}

/// Number of RNG blocks a run of `n_pulses` decomposes into.
pub fn block_count(n_pulses: u64) -> u64 {
    n_pulses.div_ceil(BLOCK_LEN)
}

/// Simulate one block of the run. Blocks are fixed slices of the pulse
/// index space with independent RNG streams, so any partition of the block
/// indices across workers merges to the same totals.
pub fn simulate_block(
    p: &ProtocolParams,
    ch: &ChannelParams,
    adv: &AdversaryConfig,
    seed: u64,
    n_pulses: u64,
    block: u64,
) -> Result<SimCounts> {
    if n_pulses == 0 {
        return Err(Error::Domain("n_pulses must be at least 1"));
    }
    if block >= block_count(n_pulses) {
        return Err(Error::Domain("block index out of range"));
    }
    adv.validate()?;

    let plan = PulsePlan::new(p, n_pulses);
    let tables = ChannelTables::build(ch, adv);
    let exp_neg = [exp(-p.mu), exp(-p.nu), exp(-p.nu), 1.0];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block + 1);

    let lo = block * BLOCK_LEN;
    let hi = ((block + 1) * BLOCK_LEN).min(plan.n_pulses);
    let mut counts = SimCounts {
        pulses: hi - lo,
        ..SimCounts::default()
    };

    for pulse in lo..hi {
        let class = plan.class_of(pulse);
        let alice = class.alice_basis();
        let intensity = class.intensity(p);

        let n = sample_poisson(intensity, exp_neg[class.index()], uniform(&mut rng));
        let bob = if uniform(&mut rng) < p.p_z {
            MeasBasis::Z
        } else {
            MeasBasis::X
        };
        let detected = uniform(&mut rng) < tables.detect_prob(n, alice, ch);

        let error = if detected {
            let e = match alice {
                Some(basis) if basis == bob => tables.matched_error_prob(n, basis, ch),
                // mismatched bases and basis-free pulses read out a coin flip
                _ => 0.5,
            };
            uniform(&mut rng) < e
        } else {
            false
        };

        let cell = counts.cell_mut(class, bob);
        cell.sent += 1;
        if detected {
            cell.detected += 1;
            if error {
                cell.errors += 1;
            }
        }

        let truth = counts.photon_mut(n);
        truth.sent += 1;
        if detected {
            truth.detected += 1;
            if alice == Some(bob) {
                match bob {
                    MeasBasis::Z => {
                        truth.z_matched_detected += 1;
                        truth.z_matched_errors += error as u64;
                    }
                    MeasBasis::X => {
                        truth.x_matched_detected += 1;
                        truth.x_matched_errors += error as u64;
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// Simulate `n_pulses` pulses of the protocol. Deterministic in `seed`;
/// equals the in-order merge of [`simulate_block`] over all blocks.
pub fn simulate(
    p: &ProtocolParams,
    ch: &ChannelParams,
    adv: &AdversaryConfig,
    seed: u64,
    n_pulses: u64,
) -> Result<SimCounts> {
    if n_pulses == 0 {
        return Err(Error::Domain("n_pulses must be at least 1"));
    }
    let mut total = SimCounts::default();
    for block in 0..block_count(n_pulses) {
        total.merge(&simulate_block(p, ch, adv, seed, n_pulses, block)?);
    }
    Ok(total)
}

/// Empirical observables from simulation counts: gains and QBERs per
/// intensity/basis cell, vacuum yield over all vacuum pulses regardless of
/// the receiver's basis.
pub fn counts_to_stats(c: &SimCounts) -> Result<ObservedStats> {
    let sig = c.cell(PulseClass::Signal, MeasBasis::Z);
    if sig.sent == 0 {
        return Err(Error::MissingStatistic("signal pulses measured in Z"));
    }
    if sig.detected == 0 {
        return Err(Error::MissingStatistic("signal detections in Z"));
    }
    let dec_z = c.cell(PulseClass::DecoyZ, MeasBasis::Z);
    if dec_z.sent == 0 {
        return Err(Error::MissingStatistic("decoy pulses measured in Z"));
    }
    let dec_x = c.cell(PulseClass::DecoyX, MeasBasis::X);
    if dec_x.sent == 0 {
        return Err(Error::MissingStatistic("decoy pulses measured in X"));
    }
    let vac_sent =
        c.cell(PulseClass::Vacuum, MeasBasis::Z).sent + c.cell(PulseClass::Vacuum, MeasBasis::X).sent;
    if vac_sent == 0 {
        return Err(Error::MissingStatistic("vacuum pulses"));
    }
    let vac_detected = c.cell(PulseClass::Vacuum, MeasBasis::Z).detected
        + c.cell(PulseClass::Vacuum, MeasBasis::X).detected;
    Ok(ObservedStats {
        q_mu_z: sig.detected as f64 / sig.sent as f64,
        e_mu_z: sig.errors as f64 / sig.detected as f64,
        q_nu_z: dec_z.detected as f64 / dec_z.sent as f64,
        q_nu_x: dec_x.detected as f64 / dec_x.sent as f64,
        eq_nu_x: dec_x.errors as f64 / dec_x.sent as f64,
        y0_obs: vac_detected as f64 / vac_sent as f64,
    })
}
