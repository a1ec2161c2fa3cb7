//! Upper-confidence-bound policies over a finite candidate set: a static
//! variant, a time-varying variant with exponential downweighting, a variant
//! resetting on a fixed block schedule, and an event-triggered variant that
//! resets when the observed residual exceeds a concentration threshold.

use crate::kernels::{Kernel, TemporalFactors};
use crate::linalg::Matrix;
use crate::posterior::{Dataset, FittedPosterior, NoiseModel, Observation, Prediction};
use crate::scalar::{real, Real};
use crate::synthetic::argmax_lowest_index;
use crate::trigger::{evaluate_trigger, TriggerConfig, TriggerEvaluation};
use crate::{Error, Result};

/// Confidence width multiplier β_t used in the acquisition μ + √β_t·σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSchedule<F> {
    /// β_t = max(0, c₁·ln(c₂·t)).
    Approximate { c1: F, c2: F },
    /// Full high-probability width for a d-dimensional box of radius r under
    /// smoothness constants a₁, b₁ and confidence δ:
    /// β_t = 2·ln(5π²t²/(3δ)) + 2d·ln(t²·d·b₁·r·√(ln(5·d·a₁·π²t²/(3δ)))),
    /// clamped at 0.
    Exact { delta: F, d: u32, r: F, a1: F, b1: F },
}

impl<F: Real> BetaSchedule<F> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Approximate { c1, c2 } => {
                for (name, v) in [("c1", c1), ("c2", c2)] {
                    if !(v > F::zero()) || !v.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "beta coefficient {name} must be positive and finite, got {v}"
                        )));
                    }
                }
            }
            BetaSchedule::Exact { delta, d, r, a1, b1 } => {
                if !(delta > F::zero() && delta < F::one()) {
                    return Err(Error::InvalidParameter(format!(
                        "beta confidence must lie in (0, 1), got {delta}"
                    )));
                }
                if d == 0 {
                    return Err(Error::InvalidParameter(
                        "beta dimension must be at least 1".into(),
                    ));
                }
                for (name, v) in [("r", r), ("a1", a1), ("b1", b1)] {
                    if !(v > F::zero()) || !v.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "beta constant {name} must be positive and finite, got {v}"
                        )));
                    }
                }
                // The nested logarithm must be positive at t = 1, otherwise
                // the √ below is undefined; it only grows with t.
                let five = real::<F>(5.0);
                let three = real::<F>(3.0);
                let pi_sq = F::PI() * F::PI();
                let inner = (five * real::<F>(d as f64) * a1 * pi_sq / (three * delta)).ln();
                if !(inner > F::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "beta constants too small: nested log term is {inner} at t = 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Width at step t ≥ 1. Never negative.
    pub fn beta(&self, t: u64) -> F {
        debug_assert!(t >= 1, "beta is defined for t >= 1");
        let tf = real::<F>(t as f64);
        match *self {
            BetaSchedule::Approximate { c1, c2 } => (c1 * (c2 * tf).ln()).max(F::zero()),
            BetaSchedule::Exact { delta, d, r, a1, b1 } => {
                let two = real::<F>(2.0);
                let five = real::<F>(5.0);
                let three = real::<F>(3.0);
                let pi_sq = F::PI() * F::PI();
                let df = real::<F>(d as f64);
                let t_sq = tf * tf;
                let term1 = two * (five * pi_sq * t_sq / (three * delta)).ln();
                let inner = (five * df * a1 * pi_sq * t_sq / (three * delta)).ln();
                let term2 = two * df * (t_sq * df * b1 * r * inner.sqrt()).ln();
                (term1 + term2).max(F::zero())
            }
        }
    }
}

/// Block length ⌈min{T, 12·ε^(−1/4)}⌉ for the scheduled-reset policy.
pub fn r_gp_ucb_block_length<F: Real>(epsilon: F, horizon: u64) -> Result<u64> {
    if !(epsilon >= F::zero() && epsilon <= F::one()) {
        return Err(Error::InvalidParameter(format!(
            "block-length rate must lie in [0, 1], got {epsilon}"
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    // ε = 0 gives an infinite raw length; min() then picks the horizon.
    let raw = real::<F>(12.0) * epsilon.powf(real::<F>(-0.25));
    let clamped = real::<F>(horizon as f64).min(raw);
    let n = clamped.ceil().to_u64().ok_or_else(|| {
        Error::InvalidParameter(format!("block length does not fit in u64: {clamped}"))
    })?;
    Ok(n.max(1))
}

/// Candidate set description: either a uniform tensor grid over a box
/// (endpoints included, the last dimension varying fastest in the candidate
/// index) or a plain set of discrete arms.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain<F> {
    Grid { bounds: Vec<(F, F)>, resolution: usize },
    Arms { count: usize },
}

impl<F: Real> Domain<F> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Grid { bounds, resolution } => {
                if bounds.is_empty() {
                    return Err(Error::InvalidParameter("grid needs at least one dimension".into()));
                }
                if *resolution == 0 {
                    return Err(Error::InvalidParameter("grid resolution must be at least 1".into()));
                }
                for &(lo, hi) in bounds {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "grid bounds must be finite with lo < hi, got ({lo}, {hi})"
                        )));
                    }
                }
                // Guard against index overflow for absurd resolutions.
                let count = (*resolution as u128).checked_pow(bounds.len() as u32);
                match count {
                    Some(c) if c <= usize::MAX as u128 => Ok(()),
                    _ => Err(Error::InvalidParameter("grid has too many points".into())),
                }
            }
            Domain::Arms { count } => {
                if *count == 0 {
                    return Err(Error::InvalidParameter("arm count must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Grid { bounds, .. } => bounds.len(),
            Domain::Arms { .. } => 1,
        }
    }

    pub fn n_candidates(&self) -> usize {
        match self {
            Domain::Grid { bounds, resolution } => resolution.pow(bounds.len() as u32),
            Domain::Arms { count } => *count,
        }
    }

    /// Materialized grid coordinates in candidate order. Errors for arms.
    pub fn grid_points(&self) -> Result<Vec<Vec<F>>> {
        let Domain::Grid { bounds, resolution } = self else {
            return Err(Error::InvalidParameter("domain has no grid coordinates".into()));
        };
        self.validate()?;
        let res = *resolution;
        let d = bounds.len();
        let n = self.n_candidates();
        let mut pts = Vec::with_capacity(n);
        for idx in 0..n {
            let mut point = vec![F::zero(); d];
            let mut rem = idx;
            for j in (0..d).rev() {
                let m = rem % res;
                rem /= res;
                let (lo, hi) = bounds[j];
                let frac = if res > 1 {
                    real::<F>(m as f64) / real::<F>((res - 1) as f64)
                } else {
                    F::zero()
                };
                point[j] = lo + (hi - lo) * frac;
            }
            pts.push(point);
        }
        Ok(pts)
    }

    /// Candidate index of the grid point nearest to x per dimension, ties
    /// resolved toward the lower index. Errors for arms.
    pub fn nearest_grid_index(&self, x: &[F]) -> Result<usize> {
        let Domain::Grid { bounds, resolution } = self else {
            return Err(Error::InvalidParameter("domain has no grid coordinates".into()));
        };
        if x.len() != bounds.len() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, grid has {}",
                x.len(),
                bounds.len()
            )));
        }
        let res = *resolution;
        let mut idx = 0usize;
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            let m = if res > 1 {
                let frac = (x[j] - lo) / (hi - lo) * real::<F>((res - 1) as f64);
                // ceil(frac − 1/2) rounds half-way cases down.
                let m = (frac - real::<F>(0.5)).ceil();
                let m = m.max(F::zero()).min(real::<F>((res - 1) as f64));
                m.to_usize().unwrap_or(0)
            } else {
                0
            };
            idx = idx * res + m;
        }
        Ok(idx)
    }
}

/// Which policy governs model fitting and dataset resets.
#[derive(Clone, Copy, Debug)]
pub enum Policy<F> {
    /// Static model over all observations; never resets.
    GpUcb,
    /// Time-varying model downweighting old observations by (1−ε)^(lag/2).
    TvGpUcb { epsilon: F },
    /// Static model reset to empty every `n_const` steps.
    RGpUcb { n_const: u64 },
    /// Static model reset when the residual test fires; the triggering
    /// observation is retained as the sole entry of the fresh dataset.
    EtGpUcb { trigger: TriggerConfig<F> },
}

impl<F: Real> Policy<F> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Policy::GpUcb | Policy::EtGpUcb { .. } => Ok(()),
            Policy::TvGpUcb { epsilon } => {
                if epsilon >= F::zero() && epsilon <= F::one() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "forgetting rate must lie in [0, 1], got {epsilon}"
                    )))
                }
            }
            Policy::RGpUcb { n_const } => {
                if n_const >= 1 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("block length must be at least 1".into()))
                }
            }
        }
    }

    /// Canonical label used in traces and summaries.
    pub fn kind_label(&self) -> &'static str {
        match self {
            Policy::GpUcb => "gp_ucb",
            Policy::TvGpUcb { .. } => "tv_gp_ucb",
            Policy::RGpUcb { .. } => "r_gp_ucb",
            Policy::EtGpUcb { .. } => "et_gp_ucb",
        }
    }
}

/// Acquisition score μ + √β·σ.
pub fn ucb_score<F: Real>(pred: Prediction<F>, beta: F) -> F {
    pred.mean + beta.sqrt() * pred.std_dev()
}

/// Outcome of one acquisition: the chosen candidate, its posterior under the
/// model the policy acted on, and the attained score.
#[derive(Clone, Copy, Debug)]
pub struct Selection<F> {
    pub t: u64,
    pub x_index: usize,
    pub prediction: Prediction<F>,
    pub ucb: F,
}

/// Bookkeeping from feeding an observation back into the policy.
#[derive(Clone, Copy, Debug)]
pub struct StepUpdate<F> {
    pub t: u64,
    pub x_index: usize,
    pub reset: bool,
    pub trigger: Option<TriggerEvaluation<F>>,
}

/// One policy's model state over a fixed candidate set. Each step is
/// `select` (refit from scratch, score every candidate, pick the argmax with
/// ties to the lowest index) followed by `update` with the observed value.
///
/// Kernel evaluations are cached across steps; factorizations are not.
pub struct PolicyState<'a, F: Real, K: Kernel<F>> {
    policy: Policy<F>,
    kernel: &'a K,
    candidates: &'a [K::Point],
    noise: NoiseModel<F>,
    data: Dataset<K::Point, F>,
    reset_log: Vec<u64>,
    next_t: u64,
    /// k(c, c) per candidate.
    cand_prior: Vec<F>,
    /// k(c, x_i) per candidate, one column per dataset entry.
    cand_rows: Vec<Vec<F>>,
    /// Lower-triangle rows of the spatial Gram matrix of the dataset.
    gram_rows: Vec<Vec<F>>,
    /// Scratch: temporally scaled candidate rows.
    tv_rows: Vec<Vec<F>>,
    preds: Vec<Prediction<F>>,
    scores: Vec<F>,
    pending: Option<Selection<F>>,
}

impl<'a, F: Real, K: Kernel<F>> PolicyState<'a, F, K> {
    pub fn new(
        policy: Policy<F>,
        kernel: &'a K,
        candidates: &'a [K::Point],
        noise: NoiseModel<F>,
    ) -> Result<Self> {
        policy.validate()?;
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("candidate set is empty".into()));
        }
        let mut cand_prior = Vec::with_capacity(candidates.len());
        for c in candidates {
            cand_prior.push(kernel.eval(c, c)?);
        }
        Ok(Self {
            policy,
            kernel,
            candidates,
            noise,
            data: Dataset::new(),
            reset_log: Vec::new(),
            next_t: 1,
            cand_prior,
            cand_rows: vec![Vec::new(); candidates.len()],
            gram_rows: Vec::new(),
            tv_rows: vec![Vec::new(); candidates.len()],
            preds: Vec::new(),
            scores: Vec::new(),
            pending: None,
        })
    }

    pub fn policy(&self) -> &Policy<F> {
        &self.policy
    }

    /// Absolute step the next selection will act at (1-based).
    pub fn next_step(&self) -> u64 {
        self.next_t
    }

    pub fn data(&self) -> &Dataset<K::Point, F> {
        &self.data
    }

    /// Absolute steps at which the dataset was reset.
    pub fn reset_log(&self) -> &[u64] {
        &self.reset_log
    }

    /// Per-candidate posterior from the most recent `select`.
    pub fn predictions(&self) -> &[Prediction<F>] {
        &self.preds
    }

    /// Per-candidate acquisition scores from the most recent `select`.
    pub fn scores(&self) -> &[F] {
        &self.scores
    }

    /// Refit the model the policy prescribes, score every candidate, and
    /// keep the chosen one pending until `update` feeds its observation.
    pub fn select(&mut self, beta: F) -> Result<Selection<F>> {
        if !(beta >= F::zero()) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        let gram = self.spatial_gram_matrix();
        match self.policy {
            Policy::TvGpUcb { epsilon } => {
                self.scale_rows_for_query(epsilon)?;
                let post = FittedPosterior::fit_time_varying_with_gram(
                    self.kernel,
                    &self.data,
                    self.noise,
                    epsilon,
                    self.next_t,
                    gram,
                )?;
                post.query_batch_from_rows(&self.tv_rows, &self.cand_prior, &mut self.preds);
            }
            _ => {
                let post =
                    FittedPosterior::fit_static_with_gram(self.kernel, &self.data, self.noise, gram)?;
                post.query_batch_from_rows(&self.cand_rows, &self.cand_prior, &mut self.preds);
            }
        }
        self.scores.clear();
        for p in &self.preds {
            self.scores.push(ucb_score(*p, beta));
        }
        let (x_index, ucb) = argmax_lowest_index(&self.scores);
        let sel = Selection { t: self.next_t, x_index, prediction: self.preds[x_index], ucb };
        self.pending = Some(sel);
        Ok(sel)
    }

    /// Feed the observed value for the pending selection. Applies the
    /// policy's reset rule and advances the step counter.
    pub fn update(&mut self, y: F) -> Result<StepUpdate<F>> {
        let sel = self.pending.take().ok_or_else(|| {
            Error::InvalidParameter("update called without a pending selection".into())
        })?;
        if !y.is_finite() {
            return Err(Error::InvalidParameter(format!("observed value must be finite, got {y}")));
        }
        let t = sel.t;
        let point = self.candidates[sel.x_index].clone();
        let obs = Observation { point, value: y, t_abs: t };
        let mut reset = false;
        let mut trigger = None;
        match self.policy {
            Policy::GpUcb | Policy::TvGpUcb { .. } => {
                self.append_with_caches(obs)?;
            }
            Policy::RGpUcb { n_const } => {
                self.append_with_caches(obs)?;
                if t % n_const == 0 {
                    self.data.reset(t);
                    self.rebuild_caches()?;
                    self.reset_log.push(t);
                    reset = true;
                }
            }
            Policy::EtGpUcb { trigger: cfg } => {
                // Evaluated on the model used for the selection, before the
                // observation joins the dataset.
                let ev =
                    evaluate_trigger(&cfg, sel.prediction, y, self.data.next_reset_clock())?;
                if ev.fired {
                    self.data.reset_retaining(obs);
                    self.rebuild_caches()?;
                    self.reset_log.push(t);
                    reset = true;
                } else {
                    self.append_with_caches(obs)?;
                }
                trigger = Some(ev);
            }
        }
        self.next_t = t + 1;
        Ok(StepUpdate { t, x_index: sel.x_index, reset, trigger })
    }

    fn spatial_gram_matrix(&self) -> Matrix<F> {
        let n = self.data.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.gram_rows[i][j];
                *m.at_mut(i, j) = v;
                *m.at_mut(j, i) = v;
            }
        }
        m
    }

    /// tv_rows[c][i] = k(c, x_i) · (1−ε)^((t_now − t_i)/2).
    fn scale_rows_for_query(&mut self, epsilon: F) -> Result<()> {
        let entries = self.data.entries();
        if entries.is_empty() {
            for row in &mut self.tv_rows {
                row.clear();
            }
            return Ok(());
        }
        let factors = TemporalFactors::new(epsilon)?;
        // Entries are in strictly increasing time order, so the first entry
        // gives the largest lag.
        let max_lag = self.next_t - entries[0].t_abs;
        let table = factors.factor_table(max_lag);
        for (row, src) in self.tv_rows.iter_mut().zip(&self.cand_rows) {
            row.clear();
            row.extend(
                src.iter()
                    .zip(entries)
                    .map(|(&k, e)| k * table[(self.next_t - e.t_abs) as usize]),
            );
        }
        Ok(())
    }

    fn append_with_caches(&mut self, obs: Observation<K::Point, F>) -> Result<()> {
        let kernel = self.kernel;
        let mut gram_row = Vec::with_capacity(self.data.len() + 1);
        for e in self.data.entries() {
            gram_row.push(kernel.eval(&obs.point, &e.point)?);
        }
        gram_row.push(kernel.eval(&obs.point, &obs.point)?);
        for (cand, row) in self.candidates.iter().zip(&mut self.cand_rows) {
            row.push(kernel.eval(cand, &obs.point)?);
        }
        self.gram_rows.push(gram_row);
        self.data.append(obs)
    }

    /// Recompute all cached kernel evaluations from the current dataset.
    fn rebuild_caches(&mut self) -> Result<()> {
        let kernel = self.kernel;
        self.gram_rows.clear();
        let entries = self.data.entries();
        for (i, ei) in entries.iter().enumerate() {
            let mut row = Vec::with_capacity(i + 1);
            for ej in entries.iter().take(i + 1) {
                row.push(kernel.eval(&ei.point, &ej.point)?);
            }
            self.gram_rows.push(row);
        }
        for (cand, row) in self.candidates.iter().zip(&mut self.cand_rows) {
            row.clear();
            for e in entries {
                row.push(kernel.eval(cand, &e.point)?);
            }
        }
        Ok(())
    }
}
