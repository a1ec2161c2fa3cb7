//! Covariance kernels over spatial inputs, plus the temporal decay factors
//! used by the time-varying posterior.

use std::io::Read;
use std::path::Path;

use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::{real, Real};
use crate::{Error, Result};

/// Covariance function over a point type.
pub trait Kernel<F: Real>: Send + Sync {
    type Point: Clone + Send + Sync;

    /// k(a, b). Symmetric in its arguments; `eval(x, x)` is the prior
    /// variance at `x`.
    fn eval(&self, a: &Self::Point, b: &Self::Point) -> Result<F>;
}

/// Squared-exponential kernel with per-dimension lengthscales:
/// k(a, b) = σ_f² · exp(−½ Σ_d ((a_d − b_d) / ℓ_d)²).
#[derive(Clone, Debug)]
pub struct SquaredExponentialKernel<F> {
    lengthscales: Vec<F>,
    signal_variance: F,
}

impl<F: Real> SquaredExponentialKernel<F> {
    pub fn new(lengthscales: Vec<F>, signal_variance: F) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidParameter("lengthscales must be non-empty".into()));
        }
        if lengthscales.iter().any(|l| !(*l > F::zero()) || !l.is_finite()) {
            return Err(Error::InvalidParameter("lengthscales must be positive and finite".into()));
        }
        if !(signal_variance > F::zero()) || !signal_variance.is_finite() {
            return Err(Error::InvalidParameter("signal variance must be positive and finite".into()));
        }
        Ok(SquaredExponentialKernel { lengthscales, signal_variance })
    }

    /// Same lengthscale in every dimension, unit signal variance.
    pub fn isotropic(dim: usize, lengthscale: F) -> Result<Self> {
        Self::new(vec![lengthscale; dim], F::one())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn signal_variance(&self) -> F {
        self.signal_variance
    }
}

impl<F: Real> Kernel<F> for SquaredExponentialKernel<F> {
    type Point = Vec<F>;

    fn eval(&self, a: &Vec<F>, b: &Vec<F>) -> Result<F> {
        let d = self.lengthscales.len();
        if a.len() != d || b.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "kernel over {d} dimensions applied to points of dimension {} and {}",
                a.len(),
                b.len()
            )));
        }
        let mut q = F::zero();
        for i in 0..d {
            let z = (a[i] - b[i]) / self.lengthscales[i];
            q += z * z;
        }
        Ok(self.signal_variance * (-q * real::<F>(0.5)).exp())
    }
}

/// Kernel given by an explicit covariance matrix over a finite arm set.
///
/// Construction symmetrizes the input and clamps negative eigenvalues at
/// zero, so downstream factorizations see a PSD matrix even when the matrix
/// was estimated from data.
#[derive(Clone, Debug)]
pub struct EmpiricalKernel<F> {
    matrix: Matrix<F>,
}

/// Relative asymmetry above which an input matrix is rejected instead of
/// silently symmetrized.
const MAX_RELATIVE_ASYMMETRY: f64 = 1e-6;

impl<F: Real> EmpiricalKernel<F> {
    pub fn new(matrix: Matrix<F>) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::InvalidParameter("empirical kernel matrix must be square and non-empty".into()));
        }
        if matrix.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("empirical kernel matrix has non-finite entries".into()));
        }
        let scale = matrix
            .data()
            .iter()
            .fold(F::zero(), |acc, &v| acc.max(v.abs()))
            .max(F::one());
        if matrix.max_asymmetry() > scale * real::<F>(MAX_RELATIVE_ASYMMETRY) {
            return Err(Error::InvalidParameter("empirical kernel matrix is not symmetric".into()));
        }
        let sym = matrix.symmetrized()?;
        let n = sym.rows();
        let (eig, v) = symmetric_eigen(&sym, 64)?;
        let clamped: Vec<F> = eig.iter().map(|&e| e.max(F::zero())).collect();
        let mut cleaned = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = F::zero();
                for k in 0..n {
                    s += v.at(i, k) * clamped[k] * v.at(j, k);
                }
                *cleaned.at_mut(i, j) = s;
                *cleaned.at_mut(j, i) = s;
            }
        }
        Ok(EmpiricalKernel { matrix: cleaned })
    }

    /// Loads a header-free square numeric CSV matrix.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Ingest(format!("cannot open kernel matrix {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut data: Vec<F> = Vec::new();
        let mut n_cols: Option<usize> = None;
        let mut n_rows = 0usize;
        for record in rdr.records() {
            let record = record?;
            match n_cols {
                None => n_cols = Some(record.len()),
                Some(c) if c != record.len() => {
                    return Err(Error::Ingest(format!(
                        "kernel matrix row {} has {} columns, expected {c}",
                        n_rows + 1,
                        record.len()
                    )))
                }
                _ => {}
            }
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Ingest(format!("kernel matrix entry {field:?} is not a number"))
                })?;
                data.push(real::<F>(v));
            }
            n_rows += 1;
        }
        let n_cols = n_cols.unwrap_or(0);
        if n_rows == 0 || n_rows != n_cols {
            return Err(Error::Ingest(format!(
                "kernel matrix must be square and non-empty, got {n_rows}x{n_cols}"
            )));
        }
        Self::new(Matrix::from_vec(n_rows, n_cols, data)?)
    }

    pub fn n_arms(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<F> {
        &self.matrix
    }
}

impl<F: Real> Kernel<F> for EmpiricalKernel<F> {
    type Point = usize;

    fn eval(&self, a: &usize, b: &usize) -> Result<F> {
        let n = self.matrix.rows();
        for &idx in [a, b] {
            if idx >= n {
                return Err(Error::ArmOutOfRange { index: idx, n_arms: n });
            }
        }
        Ok(self.matrix.at(*a, *b))
    }
}

/// Temporal decay factors (1−ε)^{m/2} shared by the time-varying posterior.
#[derive(Clone, Copy, Debug)]
pub struct TemporalFactors<F> {
    epsilon: F,
    sqrt_one_minus_eps: F,
}

impl<F: Real> TemporalFactors<F> {
    pub fn new(epsilon: F) -> Result<Self> {
        if !(epsilon >= F::zero() && epsilon <= F::one()) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(TemporalFactors { epsilon, sqrt_one_minus_eps: (F::one() - epsilon).sqrt() })
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }

    /// (1−ε)^{|i−j|/2}. Lag zero is exactly 1 for every ε (0⁰ = 1), so ε = 1
    /// keeps a unit diagonal.
    #[inline]
    pub fn factor(&self, i: u64, j: u64) -> F {
        self.factor_for_lag(i.abs_diff(j))
    }

    /// (1−ε)^{m/2} for a non-negative lag m.
    #[inline]
    pub fn factor_for_lag(&self, lag: u64) -> F {
        self.sqrt_one_minus_eps.powi(lag as i32)
    }

    /// Table of factors for lags 0..=max_lag, built by repeated
    /// multiplication. Agrees with [`factor_for_lag`] to rounding error and
    /// costs one multiply per entry, which is what the per-step refits want.
    pub fn factor_table(&self, max_lag: u64) -> Vec<F> {
        let mut table = Vec::with_capacity(max_lag as usize + 1);
        let mut p = F::one();
        table.push(p);
        for _ in 0..max_lag {
            p *= self.sqrt_one_minus_eps;
            table.push(p);
        }
        table
    }
}

/// Gram matrix K[i][j] = k(points[i], points[j]).
pub fn gram_matrix<F: Real, K: Kernel<F>>(kernel: &K, points: &[K::Point]) -> Result<Matrix<F>> {
    let n = points.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&points[i], &points[j])?;
            *m.at_mut(i, j) = v;
            *m.at_mut(j, i) = v;
        }
    }
    Ok(m)
}

/// Matrix of temporal factors [(1−ε)^{|t_i−t_j|/2}] for observation times `times`.
pub fn temporal_gram<F: Real>(factors: &TemporalFactors<F>, times: &[u64]) -> Matrix<F> {
    let n = times.len();
    let mut m = Matrix::zeros(n, n);
    if n == 0 {
        return m;
    }
    let max_lag = times
        .iter()
        .copied()
        .max()
        .unwrap()
        .saturating_sub(times.iter().copied().min().unwrap());
    let table = factors.factor_table(max_lag);
    for i in 0..n {
        for j in 0..=i {
            let v = table[times[i].abs_diff(times[j]) as usize];
            *m.at_mut(i, j) = v;
            *m.at_mut(j, i) = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn se_at_zero_distance_is_signal_variance() {
        let k = SquaredExponentialKernel::<f64>::isotropic(2, 0.2).unwrap();
        let x = vec![0.3, 0.7];
        assert_eq!(k.eval(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn se_at_one_lengthscale_distance() {
        // distance ℓ in one dimension → exp(−1/2)
        let k = SquaredExponentialKernel::<f64>::isotropic(1, 0.2).unwrap();
        let v = k.eval(&vec![0.0], &vec![0.2]).unwrap();
        assert!((v - 0.606530660).abs() < 1e-8);
    }

    #[test]
    fn se_anisotropic_scales_per_dimension() {
        let k = SquaredExponentialKernel::new(vec![0.1, 1.0], 1.0).unwrap();
        let v = k.eval(&vec![0.0, 0.0], &vec![0.1, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn se_symmetry_and_bounds_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = SquaredExponentialKernel::new(vec![0.3, 0.5, 0.9], 1.0).unwrap();
        for _ in 0..1000 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ab = k.eval(&a, &b).unwrap();
            let ba = k.eval(&b, &a).unwrap();
            assert_eq!(ab, ba);
            assert!(ab > 0.0 && ab <= 1.0);
        }
    }

    #[test]
    fn se_dimension_mismatch_is_an_error() {
        let k = SquaredExponentialKernel::<f64>::isotropic(2, 0.2).unwrap();
        assert!(k.eval(&vec![0.0], &vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn se_rejects_bad_parameters() {
        assert!(SquaredExponentialKernel::<f64>::new(vec![0.0], 1.0).is_err());
        assert!(SquaredExponentialKernel::<f64>::new(vec![0.2], 0.0).is_err());
        assert!(SquaredExponentialKernel::<f64>::new(vec![], 1.0).is_err());
    }

    #[test]
    fn empirical_kernel_evaluates_matrix_entries() {
        let m = Matrix::from_vec(2, 2, vec![1.0f64, 0.5, 0.5, 1.0]).unwrap();
        let k = EmpiricalKernel::new(m).unwrap();
        assert!((k.eval(&0, &1).unwrap() - 0.5).abs() < 1e-12);
        assert!((k.eval(&1, &1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            k.eval(&2, &0),
            Err(Error::ArmOutOfRange { index: 2, n_arms: 2 })
        ));
    }

    #[test]
    fn empirical_kernel_clamps_negative_eigenvalues() {
        // eigenvalues {3, -1} → clamped to {3, 0} → entries all 1.5
        let m = Matrix::from_vec(2, 2, vec![1.0f64, 2.0, 2.0, 1.0]).unwrap();
        let k = EmpiricalKernel::new(m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((k.matrix().at(i, j) - 1.5).abs() < 1e-10);
            }
        }
        // the cleaned matrix factors without escalated jitter
        let ch = crate::linalg::Cholesky::factor_with_schedule(
            k.matrix(),
            crate::linalg::SAMPLER_JITTER,
        )
        .unwrap();
        assert!(ch.jitter() < 1e-9);
    }

    #[test]
    fn empirical_kernel_rejects_asymmetric_input() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.6, 0.2, 1.0]).unwrap();
        assert!(EmpiricalKernel::new(m).is_err());
    }

    #[test]
    fn empirical_kernel_csv_round_trip() {
        let csv = "1.0,0.5\n0.5,2.0\n";
        let k = EmpiricalKernel::<f64>::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(k.n_arms(), 2);
        assert!((k.eval(&0, &1).unwrap() - 0.5).abs() < 1e-9);
        assert!((k.eval(&1, &1).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn empirical_kernel_csv_rejects_ragged_and_non_square() {
        assert!(EmpiricalKernel::<f64>::from_csv_reader("1.0,0.5\n0.5\n".as_bytes()).is_err());
        assert!(EmpiricalKernel::<f64>::from_csv_reader("1.0,0.5\n".as_bytes()).is_err());
        assert!(EmpiricalKernel::<f64>::from_csv_reader("".as_bytes()).is_err());
        assert!(EmpiricalKernel::<f64>::from_csv_reader("1.0,x\n0.5,1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn temporal_factors_match_closed_form() {
        let f = TemporalFactors::new(0.19f64).unwrap();
        assert_eq!(f.factor(5, 5), 1.0);
        assert!((f.factor(1, 3) - 0.81).abs() < 1e-12);
        assert!((f.factor(3, 1) - 0.81).abs() < 1e-12);
        assert!((f.factor_for_lag(1) - 0.81f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn temporal_factors_epsilon_extremes() {
        let f0 = TemporalFactors::new(0.0f64).unwrap();
        assert_eq!(f0.factor(1, 400), 1.0);
        let f1 = TemporalFactors::new(1.0f64).unwrap();
        assert_eq!(f1.factor(7, 7), 1.0);
        assert_eq!(f1.factor(7, 8), 0.0);
        assert!(TemporalFactors::new(-0.1f64).is_err());
        assert!(TemporalFactors::new(1.1f64).is_err());
    }

    #[test]
    fn temporal_factors_monotone_in_lag() {
        let f = TemporalFactors::new(0.3f64).unwrap();
        for m in 0..30u64 {
            assert!(f.factor_for_lag(m + 1) < f.factor_for_lag(m));
        }
    }

    #[test]
    fn factor_table_agrees_with_per_lag_factors() {
        let f = TemporalFactors::new(0.07f64).unwrap();
        let table = f.factor_table(500);
        assert_eq!(table.len(), 501);
        for (lag, &v) in table.iter().enumerate() {
            let direct = f.factor_for_lag(lag as u64);
            assert!((v - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn gram_matrix_is_symmetric_with_unit_diagonal() {
        let k = SquaredExponentialKernel::<f64>::isotropic(2, 0.2).unwrap();
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.5, 0.1], vec![1.0, 1.0]];
        let g = gram_matrix(&k, &pts).unwrap();
        for i in 0..3 {
            assert_eq!(g.at(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(g.at(i, j), g.at(j, i));
            }
        }
    }

    #[test]
    fn temporal_gram_matches_factors() {
        let f = TemporalFactors::new(0.19f64).unwrap();
        let g = temporal_gram(&f, &[1, 2, 3]);
        assert_eq!(g.at(0, 0), 1.0);
        assert!((g.at(0, 2) - 0.81).abs() < 1e-12);
        assert!((g.at(0, 1) - 0.9).abs() < 1e-12);
    }
}
