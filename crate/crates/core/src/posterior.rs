//! GP posteriors: the static conditioning rule and a time-varying variant
//! that downweights stale observations through temporal decay factors.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::kernels::{gram_matrix, temporal_gram, Kernel, TemporalFactors};
use crate::linalg::{Cholesky, Matrix, SAMPLER_JITTER};
use crate::scalar::Real;
use crate::{Error, Result};

/// One recorded observation.
#[derive(Clone, Debug)]
pub struct Observation<P, F> {
    pub point: P,
    pub value: F,
    /// Absolute time step at which the observation was made (1-based).
    pub t_abs: u64,
}

/// Ordered observation history with reset bookkeeping.
///
/// The reset clock t′ of the newest entry always equals its 1-based position
/// in `entries`: resets either clear the history or keep exactly the
/// triggering pair as the first post-reset entry.
#[derive(Clone, Debug, Default)]
pub struct Dataset<P, F> {
    entries: Vec<Observation<P, F>>,
    reset_time: u64,
}

impl<P: Clone, F: Real> Dataset<P, F> {
    pub fn new() -> Self {
        Dataset { entries: Vec::new(), reset_time: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Observation<P, F>] {
        &self.entries
    }

    /// Absolute step of the most recent reset; 0 when none happened yet.
    pub fn reset_time(&self) -> u64 {
        self.reset_time
    }

    /// Reset clock of the incoming observation: entries since the last reset
    /// plus one.
    pub fn next_reset_clock(&self) -> u64 {
        self.entries.len() as u64 + 1
    }

    pub fn append(&mut self, obs: Observation<P, F>) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if obs.t_abs <= last.t_abs {
                return Err(Error::InvalidParameter(format!(
                    "observation times must increase strictly: {} after {}",
                    obs.t_abs, last.t_abs
                )));
            }
        }
        self.entries.push(obs);
        Ok(())
    }

    /// Full reset at absolute step `t_abs`: the history empties.
    pub fn reset(&mut self, t_abs: u64) {
        self.entries.clear();
        self.reset_time = t_abs;
    }

    /// Reset at the observation's own step, keeping it as the sole entry.
    pub fn reset_retaining(&mut self, obs: Observation<P, F>) {
        self.reset_time = obs.t_abs;
        self.entries.clear();
        self.entries.push(obs);
    }

    pub fn values(&self) -> Vec<F> {
        self.entries.iter().map(|o| o.value).collect()
    }

    pub fn times(&self) -> Vec<u64> {
        self.entries.iter().map(|o| o.t_abs).collect()
    }
}

/// Observation noise w ~ N(0, σ_n²) as assumed by the posterior.
#[derive(Clone, Copy, Debug)]
pub struct NoiseModel<F> {
    sigma_n_sq: F,
}

impl<F: Real> NoiseModel<F> {
    pub fn new(sigma_n_sq: F) -> Result<Self> {
        if !(sigma_n_sq > F::zero()) || !sigma_n_sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive and finite, got {sigma_n_sq}"
            )));
        }
        Ok(NoiseModel { sigma_n_sq })
    }

    pub fn sigma_n_sq(&self) -> F {
        self.sigma_n_sq
    }

    pub fn sigma_n(&self) -> F {
        self.sigma_n_sq.sqrt()
    }
}

/// Posterior mean and variance at one query point. Variance is clamped at 0
/// and never exceeds the prior variance k(x,x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<F> {
    pub mean: F,
    pub variance: F,
}

impl<F: Real> Prediction<F> {
    pub fn std_dev(&self) -> F {
        self.variance.sqrt()
    }
}

enum Temporal<F> {
    Static,
    Varying { factors: TemporalFactors<F>, t_query: u64 },
}

/// A posterior conditioned on a dataset, ready for point queries.
///
/// The factorization is recomputed from scratch at every fit; there is no
/// incremental updating. Queries can go through [`query`](Self::query)
/// (kernel evaluations included) or the `*_from_row` variants that accept
/// precomputed cross-covariance rows, which is what the policy loop uses
/// with its kernel cache.
pub struct FittedPosterior<'d, F: Real, K: Kernel<F>> {
    kernel: &'d K,
    data: &'d Dataset<K::Point, F>,
    temporal: Temporal<F>,
    chol: Cholesky<F>,
    alpha: Vec<F>,
}

impl<'d, F: Real, K: Kernel<F>> FittedPosterior<'d, F, K> {
    /// Static conditioning: mean = k(x)ᵀ(K + σ_n²I)⁻¹y,
    /// variance = k(x,x) − k(x)ᵀ(K + σ_n²I)⁻¹k(x).
    pub fn fit_static(
        kernel: &'d K,
        data: &'d Dataset<K::Point, F>,
        noise: NoiseModel<F>,
    ) -> Result<Self> {
        let points: Vec<K::Point> = data.entries().iter().map(|o| o.point.clone()).collect();
        let gram = gram_matrix(kernel, &points)?;
        Self::fit_static_with_gram(kernel, data, noise, gram)
    }

    /// Static conditioning from a precomputed spatial Gram matrix.
    pub fn fit_static_with_gram(
        kernel: &'d K,
        data: &'d Dataset<K::Point, F>,
        noise: NoiseModel<F>,
        spatial_gram: Matrix<F>,
    ) -> Result<Self> {
        Self::fit_inner(kernel, data, noise, spatial_gram, Temporal::Static)
    }

    /// Time-varying conditioning: the Gram matrix and cross-covariances are
    /// scaled by (1−ε)^{lag/2} where lag is the separation in absolute steps;
    /// the query column uses the separation from `t_query`.
    pub fn fit_time_varying(
        kernel: &'d K,
        data: &'d Dataset<K::Point, F>,
        noise: NoiseModel<F>,
        epsilon: F,
        t_query: u64,
    ) -> Result<Self> {
        let points: Vec<K::Point> = data.entries().iter().map(|o| o.point.clone()).collect();
        let gram = gram_matrix(kernel, &points)?;
        Self::fit_time_varying_with_gram(kernel, data, noise, epsilon, t_query, gram)
    }

    /// Time-varying conditioning from a precomputed spatial Gram matrix.
    pub fn fit_time_varying_with_gram(
        kernel: &'d K,
        data: &'d Dataset<K::Point, F>,
        noise: NoiseModel<F>,
        epsilon: F,
        t_query: u64,
        spatial_gram: Matrix<F>,
    ) -> Result<Self> {
        let factors = TemporalFactors::new(epsilon)?;
        Self::fit_inner(kernel, data, noise, spatial_gram, Temporal::Varying { factors, t_query })
    }

    fn fit_inner(
        kernel: &'d K,
        data: &'d Dataset<K::Point, F>,
        noise: NoiseModel<F>,
        spatial_gram: Matrix<F>,
        temporal: Temporal<F>,
    ) -> Result<Self> {
        let n = data.len();
        if spatial_gram.rows() != n || spatial_gram.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "gram matrix is {}x{} for {} observations",
                spatial_gram.rows(),
                spatial_gram.cols(),
                n
            )));
        }
        let mut k = match &temporal {
            Temporal::Static => spatial_gram,
            Temporal::Varying { factors, .. } => {
                let times = data.times();
                spatial_gram.hadamard(&temporal_gram(factors, &times))?
            }
        };
        k.add_to_diagonal(noise.sigma_n_sq());
        let chol = Cholesky::factor(&k)?;
        let alpha = chol.solve(&data.values());
        Ok(FittedPosterior { kernel, data, temporal, chol, alpha })
    }

    /// Cross-covariance row between `x` and the dataset, temporal factors
    /// applied in time-varying mode.
    pub fn cross_row(&self, x: &K::Point) -> Result<Vec<F>> {
        let mut row = Vec::with_capacity(self.data.len());
        for obs in self.data.entries() {
            let mut v = self.kernel.eval(x, &obs.point)?;
            if let Temporal::Varying { factors, t_query } = &self.temporal {
                v = v * factors.factor(*t_query, obs.t_abs);
            }
            row.push(v);
        }
        Ok(row)
    }

    pub fn query(&self, x: &K::Point) -> Result<Prediction<F>> {
        let row = self.cross_row(x)?;
        let k_xx = self.kernel.eval(x, x)?;
        Ok(self.query_from_row(&row, k_xx))
    }

    /// Query from a precomputed cross-covariance row (temporal factors must
    /// already be applied in time-varying mode) and prior variance `k_xx`.
    pub fn query_from_row(&self, row: &[F], k_xx: F) -> Prediction<F> {
        debug_assert_eq!(row.len(), self.data.len());
        let mean = row.iter().zip(&self.alpha).fold(F::zero(), |acc, (&k, &a)| acc + k * a);
        let v = self.chol.forward(row);
        let explained = v.iter().fold(F::zero(), |acc, &x| acc + x * x);
        Prediction { mean, variance: (k_xx - explained).max(F::zero()) }
    }

    /// Batched [`query_from_row`] over many candidates, using the blocked
    /// multi-RHS solve. Row `i` of `rows` must pair with `k_xx[i]`.
    pub fn query_batch_from_rows(
        &self,
        rows: &[Vec<F>],
        k_xx: &[F],
        out: &mut Vec<Prediction<F>>,
    ) {
        debug_assert_eq!(rows.len(), k_xx.len());
        let mut explained = vec![F::zero(); rows.len()];
        self.chol.forward_sq_norms(rows, &mut explained);
        out.clear();
        out.reserve(rows.len());
        for i in 0..rows.len() {
            let mean = rows[i]
                .iter()
                .zip(&self.alpha)
                .fold(F::zero(), |acc, (&k, &a)| acc + k * a);
            out.push(Prediction { mean, variance: (k_xx[i] - explained[i]).max(F::zero()) });
        }
    }

    /// Jitter the factorization actually used.
    pub fn jitter(&self) -> F {
        self.chol.jitter()
    }
}

/// Static posterior at a single point. Empty data gives the prior
/// (mean 0, variance k(x,x)).
pub fn posterior_static<F: Real, K: Kernel<F>>(
    kernel: &K,
    data: &Dataset<K::Point, F>,
    noise: NoiseModel<F>,
    x: &K::Point,
) -> Result<Prediction<F>> {
    FittedPosterior::fit_static(kernel, data, noise)?.query(x)
}

/// Time-varying posterior at a single point; `t_query` is the absolute step
/// at which the acquisition is being optimized.
pub fn posterior_timevarying<F: Real, K: Kernel<F>>(
    kernel: &K,
    data: &Dataset<K::Point, F>,
    noise: NoiseModel<F>,
    epsilon: F,
    t_query: u64,
    x: &K::Point,
) -> Result<Prediction<F>> {
    FittedPosterior::fit_time_varying(kernel, data, noise, epsilon, t_query)?.query(x)
}

/// Draws joint GP samples on a fixed point set, factoring its Gram matrix
/// once. Cheap to clone (the factor is shared).
#[derive(Clone)]
pub struct GridSampler<F> {
    chol: Arc<Cholesky<F>>,
}

impl<F: Real> GridSampler<F> {
    pub fn new<K: Kernel<F>>(kernel: &K, points: &[K::Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("sampling grid must be non-empty".into()));
        }
        let gram = gram_matrix(kernel, points)?;
        let chol = Cholesky::factor_with_schedule(&gram, SAMPLER_JITTER)?;
        Ok(GridSampler { chol: Arc::new(chol) })
    }

    pub fn n(&self) -> usize {
        self.chol.n()
    }

    /// `n` standard-normal draws. Always drawn as `f64` and converted, so the
    /// consumed RNG stream does not depend on the scalar type.
    pub fn standard_normals<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        (0..self.n())
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                F::from_f64_lossy(z)
            })
            .collect()
    }

    /// L z: correlates a standard-normal vector with the grid covariance.
    pub fn correlate(&self, z: &[F]) -> Vec<F> {
        self.chol.lower_matvec(z)
    }

    /// One draw from N(0, Gram + jitter·I).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        let z = self.standard_normals(rng);
        self.correlate(&z)
    }
}

/// One seeded draw of a GP on a grid of points.
pub fn sample_gp_on_grid<F: Real, K: Kernel<F>>(
    kernel: &K,
    grid: &[K::Point],
    rng_seed: u64,
) -> Result<Vec<F>> {
    use rand::SeedableRng;
    let sampler = GridSampler::new(kernel, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sampler.draw(&mut rng))
}
