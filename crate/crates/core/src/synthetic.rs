//! Synthetic drifting objectives for benchmarking, driven by per-step GP
//! innovations, plus the noisy observation channel.
//!
//! RNG convention: each run derives all randomness from one seed.
//! Stream 0 of the seeded ChaCha generator drives the objective (chain
//! innovations or the sudden-change draws), stream 1 drives observation
//! noise, so the objective realization is independent of how many
//! observations a policy makes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::posterior::GridSampler;
use crate::scalar::{real, Real};
use crate::{Error, Result};

/// RNG for objective realizations (stream 0 of the seed).
pub fn chain_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// RNG for observation noise (stream 1 of the seed).
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Drift rate ε as a function of the step, either constant or piecewise
/// constant over [1, ∞).
#[derive(Clone, Debug)]
pub enum EpsilonSchedule<F> {
    Constant(F),
    /// Segments of (from_step, ε), first segment starting at step 1,
    /// steps strictly increasing.
    Piecewise(Vec<(u64, F)>),
}

impl<F: Real> EpsilonSchedule<F> {
    pub fn validate(&self) -> Result<()> {
        let check = |eps: F| -> Result<()> {
            if !(eps >= F::zero() && eps <= F::one()) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon must lie in [0, 1], got {eps}"
                )));
            }
            Ok(())
        };
        match self {
            EpsilonSchedule::Constant(e) => check(*e),
            EpsilonSchedule::Piecewise(segs) => {
                if segs.first().map(|s| s.0) != Some(1) {
                    return Err(Error::InvalidParameter(
                        "epsilon schedule must start at step 1".into(),
                    ));
                }
                for w in segs.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidParameter(
                            "epsilon schedule steps must increase strictly".into(),
                        ));
                    }
                }
                segs.iter().try_for_each(|s| check(s.1))
            }
        }
    }

    /// ε governing the transition into step `t` (t ≥ 1).
    pub fn value_at(&self, t: u64) -> F {
        match self {
            EpsilonSchedule::Constant(e) => *e,
            EpsilonSchedule::Piecewise(segs) => {
                let mut eps = segs[0].1;
                for &(from, e) in segs {
                    if from <= t {
                        eps = e;
                    } else {
                        break;
                    }
                }
                eps
            }
        }
    }
}

/// Argmax with ties broken by lowest index. Panics on empty input.
pub fn argmax_lowest_index<F: Real>(values: &[F]) -> (usize, F) {
    assert!(!values.is_empty(), "argmax of empty slice");
    let mut best = 0usize;
    let mut best_v = values[0];
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Objective evolving as f_1 = g_1, f_t = √(1−ε)·f_{t−1} + √ε·g_t with
/// i.i.d. GP draws g_t on a fixed grid. Every marginal f_t is again the
/// prior GP for any ε in [0, 1].
pub struct MarkovChainObjective<F> {
    sampler: GridSampler<F>,
    schedule: EpsilonSchedule<F>,
    rng: ChaCha8Rng,
    f: Vec<F>,
    t: u64,
}

impl<F: Real> MarkovChainObjective<F> {
    pub fn new(sampler: GridSampler<F>, schedule: EpsilonSchedule<F>, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let mut rng = chain_rng(seed);
        let f = sampler.draw(&mut rng);
        Ok(MarkovChainObjective { sampler, schedule, rng, f, t: 1 })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Current values f_t on the grid.
    pub fn values(&self) -> &[F] {
        &self.f
    }

    /// Moves from step t to t+1 with a fresh innovation draw. The draw is
    /// consumed even when ε = 0 (where the values provably stay unchanged
    /// and the correlation step is skipped), so the RNG stream position
    /// depends only on t.
    pub fn advance(&mut self) {
        self.t += 1;
        let eps = self.schedule.value_at(self.t);
        let z = self.sampler.standard_normals(&mut self.rng);
        if eps > F::zero() {
            let g = self.sampler.correlate(&z);
            let keep = (F::one() - eps).sqrt();
            let mix = eps.sqrt();
            for (fv, gv) in self.f.iter_mut().zip(&g) {
                *fv = keep * *fv + mix * *gv;
            }
        }
    }
}

/// Objective equal to one GP draw before `change_step` and a second,
/// independent draw from `change_step` on.
pub struct SuddenChangeObjective<F> {
    f_a: Vec<F>,
    f_b: Vec<F>,
    change_step: u64,
    t: u64,
}

impl<F: Real> SuddenChangeObjective<F> {
    pub fn new(sampler: &GridSampler<F>, change_step: u64, seed: u64) -> Result<Self> {
        if change_step < 1 {
            return Err(Error::InvalidParameter("change step must be at least 1".into()));
        }
        let mut rng = chain_rng(seed);
        let f_a = sampler.draw(&mut rng);
        let f_b = sampler.draw(&mut rng);
        Ok(SuddenChangeObjective { f_a, f_b, change_step, t: 1 })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn change_step(&self) -> u64 {
        self.change_step
    }

    pub fn values(&self) -> &[F] {
        if self.t < self.change_step {
            &self.f_a
        } else {
            &self.f_b
        }
    }

    pub fn advance(&mut self) {
        self.t += 1;
    }
}

/// Objective replaying a recorded value matrix, one row per step.
pub struct ReplayObjective<F> {
    rows: Vec<Vec<F>>,
    t: u64,
}

impl<F: Real> ReplayObjective<F> {
    pub fn new(rows: Vec<Vec<F>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidParameter("replay matrix must be non-empty".into()));
        }
        let w = rows[0].len();
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::InvalidParameter("replay matrix rows must have equal length".into()));
        }
        Ok(ReplayObjective { rows, t: 1 })
    }

    pub fn horizon(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn values(&self) -> &[F] {
        let idx = (self.t - 1).min(self.rows.len() as u64 - 1) as usize;
        &self.rows[idx]
    }

    pub fn advance(&mut self) {
        self.t += 1;
    }
}

/// Any of the benchmark objectives behind one stepping interface.
pub enum Objective<F> {
    Markov(MarkovChainObjective<F>),
    Sudden(SuddenChangeObjective<F>),
    Replay(ReplayObjective<F>),
}

impl<F: Real> Objective<F> {
    pub fn t(&self) -> u64 {
        match self {
            Objective::Markov(o) => o.t(),
            Objective::Sudden(o) => o.t(),
            Objective::Replay(o) => o.t(),
        }
    }

    pub fn values(&self) -> &[F] {
        match self {
            Objective::Markov(o) => o.values(),
            Objective::Sudden(o) => o.values(),
            Objective::Replay(o) => o.values(),
        }
    }

    pub fn advance(&mut self) {
        match self {
            Objective::Markov(o) => o.advance(),
            Objective::Sudden(o) => o.advance(),
            Objective::Replay(o) => o.advance(),
        }
    }

    /// Whether observations of this objective carry synthetic noise.
    /// Replayed recordings are returned exactly as stored.
    pub fn noisy(&self) -> bool {
        !matches!(self, Objective::Replay(_))
    }

    /// Exhaustive argmax of the current values; ties break to the lowest
    /// index.
    pub fn optimum(&self) -> (usize, F) {
        argmax_lowest_index(self.values())
    }

    /// Observation of candidate `x_index` at the current step:
    /// f_t(x) + w with w ~ N(0, σ_n²) for noisy objectives, the stored value
    /// for replayed ones. The noise draw is consumed either way, so RNG
    /// alignment does not depend on the objective kind.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        x_index: usize,
        sigma_n_sq: F,
        rng: &mut R,
    ) -> Result<F> {
        if !(sigma_n_sq >= F::zero()) || !sigma_n_sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be non-negative, got {sigma_n_sq}"
            )));
        }
        let values = self.values();
        if x_index >= values.len() {
            return Err(Error::ArmOutOfRange { index: x_index, n_arms: values.len() });
        }
        let z: f64 = rng.sample(StandardNormal);
        if self.noisy() {
            Ok(values[x_index] + sigma_n_sq.sqrt() * real::<F>(z))
        } else {
            Ok(values[x_index])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SquaredExponentialKernel;

    fn sampler_1d(points: &[f64]) -> GridSampler<f64> {
        let k = SquaredExponentialKernel::<f64>::isotropic(1, 0.2).unwrap();
        let grid: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
        GridSampler::new(&k, &grid).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(EpsilonSchedule::Constant(0.5f64).validate().is_ok());
        assert!(EpsilonSchedule::Constant(1.5f64).validate().is_err());
        assert!(EpsilonSchedule::Piecewise(vec![(1u64, 0.0f64), (100, 1.0)]).validate().is_ok());
        assert!(EpsilonSchedule::Piecewise(vec![(2u64, 0.0f64)]).validate().is_err());
        assert!(EpsilonSchedule::Piecewise(vec![(1u64, 0.0f64), (1, 0.5)]).validate().is_err());
    }

    #[test]
    fn schedule_lookup_uses_latest_segment() {
        let s = EpsilonSchedule::Piecewise(vec![(1u64, 0.0f64), (100, 1.0), (101, 0.25)]);
        assert_eq!(s.value_at(1), 0.0);
        assert_eq!(s.value_at(99), 0.0);
        assert_eq!(s.value_at(100), 1.0);
        assert_eq!(s.value_at(101), 0.25);
        assert_eq!(s.value_at(5000), 0.25);
    }

    #[test]
    fn epsilon_zero_chain_is_exactly_constant() {
        let sampler = sampler_1d(&[0.0, 0.5, 1.0]);
        let mut obj =
            MarkovChainObjective::new(sampler, EpsilonSchedule::Constant(0.0), 3).unwrap();
        let f1 = obj.values().to_vec();
        for _ in 0..50 {
            obj.advance();
            assert_eq!(obj.values(), &f1[..]);
        }
        assert_eq!(obj.t(), 51);
    }

    #[test]
    fn chain_is_deterministic_per_seed() {
        let mk = |seed| {
            let sampler = sampler_1d(&[0.0, 0.3, 0.6, 0.9]);
            let mut o =
                MarkovChainObjective::new(sampler, EpsilonSchedule::Constant(0.2), seed).unwrap();
            for _ in 0..10 {
                o.advance();
            }
            o.values().to_vec()
        };
        assert_eq!(mk(7), mk(7));
        assert_ne!(mk(7), mk(8));
    }

    #[test]
    fn epsilon_one_redraws_completely() {
        // with ε = 1 the next values are exactly the fresh correlated draw
        let sampler = sampler_1d(&[0.0, 0.5]);
        let mut obj =
            MarkovChainObjective::new(sampler.clone(), EpsilonSchedule::Constant(1.0), 11)
                .unwrap();
        let mut reference = chain_rng(11);
        let _f1 = sampler.draw(&mut reference);
        obj.advance();
        let g2 = sampler.draw(&mut reference);
        assert_eq!(obj.values(), &g2[..]);
    }

    #[test]
    fn piecewise_schedule_freezes_then_redraws() {
        let sampler = sampler_1d(&[0.1, 0.7]);
        let sched = EpsilonSchedule::Piecewise(vec![(1u64, 0.0f64), (4, 1.0)]);
        let mut obj = MarkovChainObjective::new(sampler, sched, 5).unwrap();
        let f1 = obj.values().to_vec();
        obj.advance(); // t=2, eps 0
        obj.advance(); // t=3, eps 0
        assert_eq!(obj.values(), &f1[..]);
        obj.advance(); // t=4, eps 1 → full redraw
        assert_ne!(obj.values(), &f1[..]);
    }

    #[test]
    fn sudden_change_switches_at_change_step() {
        let sampler = sampler_1d(&[0.2, 0.8, 0.5]);
        let mut obj = SuddenChangeObjective::new(&sampler, 3, 9).unwrap();
        let before = obj.values().to_vec();
        obj.advance(); // t = 2, still before
        assert_eq!(obj.values(), &before[..]);
        obj.advance(); // t = 3 → switched
        let after = obj.values().to_vec();
        assert_ne!(before, after);
        obj.advance(); // stays switched
        assert_eq!(obj.values(), &after[..]);
    }

    #[test]
    fn replay_steps_through_rows() {
        let mut obj = Objective::Replay(
            ReplayObjective::new(vec![vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap(),
        );
        assert_eq!(obj.optimum(), (1, 2.0));
        obj.advance();
        assert_eq!(obj.optimum(), (0, 3.0));
        assert!(!obj.noisy());
        assert!(ReplayObjective::<f64>::new(vec![]).is_err());
        assert!(ReplayObjective::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn optimum_tie_breaks_to_lowest_index() {
        assert_eq!(argmax_lowest_index(&[0.0f64, 0.0, 0.0]), (0, 0.0));
        assert_eq!(argmax_lowest_index(&[0.1f64, 0.9, 0.3]), (1, 0.9));
        assert_eq!(argmax_lowest_index(&[0.5f64, 0.5, 0.6, 0.6]), (2, 0.6));
    }

    #[test]
    fn observe_noise_behaviour() {
        let obj = Objective::Replay(ReplayObjective::new(vec![vec![1.5, -0.5]]).unwrap());
        let mut rng = noise_rng(1);
        assert_eq!(obj.observe(0, 0.05, &mut rng).unwrap(), 1.5);

        let sampler = sampler_1d(&[0.4]);
        let chain = MarkovChainObjective::new(sampler, EpsilonSchedule::Constant(0.0), 2).unwrap();
        let f = chain.values()[0];
        let obj = Objective::Markov(chain);
        let mut rng = noise_rng(2);
        assert_eq!(obj.observe(0, 0.0, &mut rng).unwrap(), f);
        let y1 = obj.observe(0, 0.05, &mut rng).unwrap();
        let y2 = obj.observe(0, 0.05, &mut rng).unwrap();
        assert_ne!(y1, y2);
        assert!(obj.observe(3, 0.05, &mut rng).is_err());
    }

    #[test]
    fn observed_noise_variance_is_calibrated() {
        let sampler = sampler_1d(&[0.4]);
        let chain = MarkovChainObjective::new(sampler, EpsilonSchedule::Constant(0.0), 3).unwrap();
        let f = chain.values()[0];
        let obj = Objective::Markov(chain);
        let sigma_sq = 0.05;
        let mut rng = noise_rng(3);
        let n = 10_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let w = obj.observe(0, sigma_sq, &mut rng).unwrap() - f;
            s += w;
            s2 += w * w;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        assert!(
            var >= 0.9 * sigma_sq && var <= 1.1 * sigma_sq,
            "noise variance {var} vs {sigma_sq}"
        );
    }
}
