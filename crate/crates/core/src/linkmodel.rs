//! Stochastic model of a single active link.
//!
//! A link accumulates fixed-size sifted blocks at a jittered rate, assigns
//! per-basis QBER from a clamped AR(1) process, and converts sifted bytes to
//! secret bytes through a pluggable [`SecretFraction`] model.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::QberDomainError;
use crate::simcore::rng::{substream, SimRng};
use crate::simcore::SimTime;
use crate::topology::{AlignmentOverhead, LinkId, LinkSpec, Scenario};

/// Highest QBER accepted by the secret-fraction models.
pub const MAX_QBER: f64 = 0.5;

/// Binary Shannon entropy in bits, with `h2(0) = h2(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Maps a QBER to the fraction of sifted bytes that survive as secret key.
pub trait SecretFraction {
    fn fraction(&self, qber: f64) -> Result<f64, QberDomainError>;
}

/// Asymptotic BB84 bound `max(0, 1 - 2 h2(Q))`. Zero from Q ~ 0.110028 upward.
#[derive(Debug, Clone, Copy, Default)]
pub struct EntropyBound;

impl SecretFraction for EntropyBound {
    fn fraction(&self, qber: f64) -> Result<f64, QberDomainError> {
        secret_fraction(qber)
    }
}

pub fn secret_fraction(qber: f64) -> Result<f64, QberDomainError> {
    if !(0.0..=MAX_QBER).contains(&qber) {
        return Err(QberDomainError(qber));
    }
    Ok((1.0 - 2.0 * binary_entropy(qber)).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub link_id: LinkId,
    /// Per-link block counter, starting at 0.
    pub seq: u64,
    pub start_time: SimTime,
    pub end_time: SimTime,
    pub sifted_bytes: u64,
    pub qber_x: f64,
    pub qber_z: f64,
    pub secret_bytes: u64,
    pub first_after_switch: bool,
    /// Base-alignment portion of the block duration; zero unless first after a switch.
    pub alignment_time: SimTime,
}

impl BlockRecord {
    pub fn duration_secs(&self) -> f64 {
        (self.end_time - self.start_time).as_secs_f64()
    }

    /// Seconds spent accumulating sifted key, excluding base alignment.
    pub fn producing_secs(&self) -> f64 {
        (self.end_time - self.start_time).saturating_sub(self.alignment_time).as_secs_f64()
    }

    pub fn qber_max(&self) -> f64 {
        self.qber_x.max(self.qber_z)
    }
}

/// Block-level parameters shared by every link of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockParams {
    pub block_size: u64,
    pub alignment: AlignmentOverhead,
}

impl From<&Scenario> for BlockParams {
    fn from(s: &Scenario) -> Self {
        Self {
            block_size: s.block_size,
            alignment: s.alignment,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkState {
    /// Sifted rate of the block most recently generated, bytes/s.
    pub sifted_rate_current: f64,
    pub qber_state_x: f64,
    pub qber_state_z: f64,
    pub rng: SimRng,
    pub blocks_completed: u64,
    jitter: Option<Gamma<f64>>,
}

impl LinkState {
    /// Fresh state with QBER at its configured means and a stream derived
    /// from `(run_seed, "link:<id>")`.
    pub fn new(spec: &LinkSpec, run_seed: u64) -> Self {
        Self::with_rng(spec, substream(run_seed, &format!("link:{}", spec.id)))
    }

    pub fn with_rng(spec: &LinkSpec, rng: SimRng) -> Self {
        let jitter = (spec.rate_jitter_shape > 0.0)
            .then(|| Gamma::new(spec.rate_jitter_shape, 1.0 / spec.rate_jitter_shape).expect("shape validated > 0"));
        Self {
            sifted_rate_current: spec.nominal_sifted_rate,
            qber_state_x: spec.qber_mean_x,
            qber_state_z: spec.qber_mean_z,
            rng,
            blocks_completed: 0,
            jitter,
        }
    }
}

fn ar1_step(rng: &mut SimRng, prev: f64, mean: f64, rho: f64, noise_std: f64) -> f64 {
    let noise = if noise_std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        z * noise_std
    } else {
        0.0
    };
    (mean + rho * (prev - mean) + noise).clamp(0.0, MAX_QBER)
}

/// Advances both bases' AR(1) processes one step and returns `(qber_x, qber_z)`.
pub fn sample_qber(state: &mut LinkState, spec: &LinkSpec) -> (f64, f64) {
    state.qber_state_x = ar1_step(&mut state.rng, state.qber_state_x, spec.qber_mean_x, spec.qber_rho, spec.qber_noise_std);
    state.qber_state_z = ar1_step(&mut state.rng, state.qber_state_z, spec.qber_mean_z, spec.qber_rho, spec.qber_noise_std);
    (state.qber_state_x, state.qber_state_z)
}

/// Draws from a normal truncated at zero by rejection; falls back to zero
/// when the mass above zero is too small to hit in a few tries.
pub fn sample_alignment<R: Rng + ?Sized>(rng: &mut R, alignment: &AlignmentOverhead) -> f64 {
    if alignment.std <= 0.0 {
        return alignment.mean.max(0.0);
    }
    for _ in 0..64 {
        let z: f64 = StandardNormal.sample(rng);
        let x = alignment.mean + alignment.std * z;
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

/// Generates the next block on an active link starting at `now`.
pub fn next_block(
    state: &mut LinkState,
    spec: &LinkSpec,
    params: &BlockParams,
    first_after_switch: bool,
    now: SimTime,
) -> BlockRecord {
    next_block_with(state, spec, params, first_after_switch, now, &EntropyBound)
}

pub fn next_block_with(
    state: &mut LinkState,
    spec: &LinkSpec,
    params: &BlockParams,
    first_after_switch: bool,
    now: SimTime,
    model: &dyn SecretFraction,
) -> BlockRecord {
    // draw order is part of the reproducibility contract: jitter, alignment, qber
    let factor = match &state.jitter {
        Some(g) => g.sample(&mut state.rng),
        None => 1.0,
    };
    state.sifted_rate_current = spec.nominal_sifted_rate * factor;
    let alignment = if first_after_switch {
        sample_alignment(&mut state.rng, &params.alignment)
    } else {
        0.0
    };
    let (qber_x, qber_z) = sample_qber(state, spec);

    let accumulate = params.block_size as f64 / state.sifted_rate_current;
    let alignment_time = SimTime::from_secs_f64(alignment);
    let duration = SimTime(SimTime::from_secs_f64(accumulate).0.max(1)) + alignment_time;
    let fraction = model
        .fraction(qber_x.max(qber_z))
        .expect("qber states are clamped to [0, 0.5]");
    let secret_bytes = ((params.block_size as f64 * fraction).floor() as u64).min(params.block_size);

    let seq = state.blocks_completed;
    state.blocks_completed += 1;
    BlockRecord {
        link_id: spec.id.clone(),
        seq,
        start_time: now,
        end_time: now + duration,
        sifted_bytes: params.block_size,
        qber_x,
        qber_z,
        secret_bytes,
        first_after_switch,
        alignment_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{NodeId, DEFAULT_BLOCK_SIZE};

    fn spec() -> LinkSpec {
        LinkSpec {
            id: LinkId::from("L"),
            endpoints: [NodeId::from("a"), NodeId::from("b")],
            fiber_length_km: 5.0,
            loss_db_per_km: 0.2,
            nominal_sifted_rate: 1389.0,
            qber_mean_x: 0.01,
            qber_mean_z: 0.01,
            qber_rho: 0.9,
            qber_noise_std: 0.002,
            rate_jitter_shape: 100.0,
        }
    }

    fn params(mean: f64, std: f64) -> BlockParams {
        BlockParams {
            block_size: DEFAULT_BLOCK_SIZE,
            alignment: AlignmentOverhead { mean, std },
        }
    }

    #[test]
    fn fraction_endpoints() {
        assert_eq!(secret_fraction(0.0).unwrap(), 1.0);
        assert!((secret_fraction(0.02).unwrap() - 0.7171189149163587).abs() < 1e-12);
        assert!((binary_entropy(0.02) - 0.14144054254182065).abs() < 1e-12);
        assert_eq!(secret_fraction(0.25).unwrap(), 0.0);
        assert_eq!(secret_fraction(0.5).unwrap(), 0.0);
        assert!(secret_fraction(-0.01).is_err());
        assert!(secret_fraction(0.51).is_err());
        assert!(secret_fraction(f64::NAN).is_err());
    }

    #[test]
    fn fraction_is_non_increasing_on_a_fine_grid() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.005).collect();
        let values: Vec<f64> = grid.iter().map(|&q| secret_fraction(q).unwrap()).collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let r25 = secret_fraction(0.25).unwrap();
        for (&q, &r) in grid.iter().zip(&values) {
            if q < 0.25 {
                assert!(r25 <= r);
            }
        }
    }

    #[test]
    fn cadence_without_jitter_is_block_over_rate() {
        let mut s = spec();
        s.rate_jitter_shape = 0.0;
        let mut st = LinkState::new(&s, 1);
        let b = next_block(&mut st, &s, &params(120.0, 30.0), false, SimTime::ZERO);
        assert!((b.duration_secs() - 500_000.0 / 1389.0).abs() < 1e-6);
        assert!((b.duration_secs() - 360.0).abs() < 0.1);
        assert_eq!(b.alignment_time, SimTime::ZERO);
        assert_eq!(b.sifted_bytes, 500_000);
        assert_eq!(st.blocks_completed, 1);
    }

    #[test]
    fn zero_alignment_makes_first_block_ordinary() {
        let s = spec();
        let mut a = LinkState::new(&s, 9);
        let mut b = a.clone();
        let first = next_block(&mut a, &s, &params(0.0, 0.0), true, SimTime::ZERO);
        let other = next_block(&mut b, &s, &params(0.0, 0.0), false, SimTime::ZERO);
        assert_eq!(first.end_time, other.end_time);
        assert_eq!(first.secret_bytes, other.secret_bytes);
    }

    #[test]
    fn cloned_states_give_identical_blocks() {
        let s = spec();
        let mut a = LinkState::new(&s, 42);
        let mut b = a.clone();
        for i in 0..20 {
            let now = SimTime::from_secs(i * 400);
            let x = next_block(&mut a, &s, &params(120.0, 30.0), i % 2 == 0, now);
            let y = next_block(&mut b, &s, &params(120.0, 30.0), i % 2 == 0, now);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn degenerate_ar1_returns_the_means() {
        let mut s = spec();
        s.qber_rho = 0.0;
        s.qber_noise_std = 0.0;
        s.qber_mean_x = 0.03;
        s.qber_mean_z = 0.02;
        let mut st = LinkState::new(&s, 3);
        st.qber_state_x = 0.4;
        for _ in 0..5 {
            assert_eq!(sample_qber(&mut st, &s), (0.03, 0.02));
        }
    }

    #[test]
    fn ar1_mean_matches_configured_mean() {
        let s = spec();
        let mut st = LinkState::new(&s, 2024);
        let n = 10_000;
        let (mut sx, mut sz) = (0.0, 0.0);
        for _ in 0..n {
            let (x, z) = sample_qber(&mut st, &s);
            sx += x;
            sz += z;
        }
        assert!((sx / n as f64 - 0.01).abs() < 0.001);
        assert!((sz / n as f64 - 0.01).abs() < 0.001);
    }

    #[test]
    fn ar1_long_run_mean_within_one_percent() {
        // stationary sd 0.00115; sd of a 10k-sample mean is ~2e-5, well inside 1% of 0.02
        let mut s = spec();
        s.qber_mean_x = 0.02;
        s.qber_mean_z = 0.02;
        s.qber_rho = 0.5;
        s.qber_noise_std = 0.001;
        let mut st = LinkState::new(&s, 5);
        let n = 10_000;
        let mean = (0..n).map(|_| sample_qber(&mut st, &s).0).sum::<f64>() / n as f64;
        assert!((mean - 0.02).abs() < 0.0002, "{mean}");
    }

    #[test]
    fn qber_clamps_at_zero() {
        let mut s = spec();
        s.qber_mean_x = 0.0;
        s.qber_mean_z = 0.0;
        s.qber_rho = 0.0;
        s.qber_noise_std = 0.05;
        let mut st = LinkState::new(&s, 11);
        let mut zeros = 0;
        for _ in 0..1000 {
            let (x, z) = sample_qber(&mut st, &s);
            assert!(x >= 0.0 && z >= 0.0);
            zeros += (x == 0.0) as u32;
        }
        assert!(zeros > 300);
    }

    #[test]
    fn first_block_overhead_separates_the_means() {
        let s = spec();
        let p = params(120.0, 30.0);
        let mut st = LinkState::new(&s, 77);
        let (mut first, mut other) = (Vec::new(), Vec::new());
        for i in 0..1200 {
            let b = next_block(&mut st, &s, &p, i % 2 == 0, SimTime::ZERO);
            assert!(b.secret_bytes <= b.sifted_bytes);
            assert!(b.end_time > b.start_time);
            if b.first_after_switch {
                first.push(b.duration_secs());
            } else {
                other.push(b.duration_secs());
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let gap = mean(&first) - mean(&other);
        assert!((gap - 120.0).abs() < 12.0, "{gap}");
    }

    #[test]
    fn high_qber_yields_no_secret() {
        let mut s = spec();
        s.qber_mean_x = 0.2;
        s.qber_rho = 0.0;
        s.qber_noise_std = 0.0;
        let mut st = LinkState::new(&s, 1);
        let b = next_block(&mut st, &s, &params(0.0, 0.0), false, SimTime::ZERO);
        assert_eq!(b.secret_bytes, 0);
    }

    #[test]
    fn alignment_sampler_never_goes_negative() {
        let mut rng = substream(1, "t");
        let a = AlignmentOverhead { mean: -5.0, std: 1.0 };
        for _ in 0..100 {
            assert!(sample_alignment(&mut rng, &a) >= 0.0);
        }
        assert_eq!(sample_alignment(&mut rng, &AlignmentOverhead { mean: 7.0, std: 0.0 }), 7.0);
    }
}
