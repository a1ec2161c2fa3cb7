//! Small dense linear algebra on flat row-major buffers.
//!
//! Sized for this crate's workloads (Gram matrices up to a few thousand on a
//! side): Cholesky factorization with an escalating jitter schedule,
//! triangular solves including a lane-blocked multi-right-hand-side path for
//! the per-candidate variance loop, and a Jacobi eigendecomposition used to
//! clean empirical kernel matrices.

use crate::scalar::{real, Real};
use crate::{Error, Result};

/// Jitter schedule for posterior covariance factorizations: start at 1e-10,
/// escalate by 10x, give up past 1e-4.
pub const POSTERIOR_JITTER: &[f64] = &[1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Jitter schedule for prior sampling factorizations. Starts at zero and
/// escalates through much smaller values than [`POSTERIOR_JITTER`], so that
/// duplicate grid points produce draws that agree to well below sampling
/// noise instead of picking up an artificial 1e-5-scale perturbation.
pub const SAMPLER_JITTER: &[f64] = &[0.0, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

/// Lane width of the blocked multi-RHS forward solve. The scratch block is
/// `n * LANES` scalars; 32 keeps it inside L2 for the sizes we run.
const LANES: usize = 32;

#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> F {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut F {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// (A + Aᵀ)/2. Requires a square matrix.
    pub fn symmetrized(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("symmetrize needs a square matrix".into()));
        }
        let n = self.rows;
        let mut out = self.clone();
        let half = real::<F>(0.5);
        for i in 0..n {
            for j in 0..i {
                let v = (self.at(i, j) + self.at(j, i)) * half;
                *out.at_mut(i, j) = v;
                *out.at_mut(j, i) = v;
            }
        }
        Ok(out)
    }

    /// max_{i,j} |a_ij − a_ji|; zero for non-square is not defined (panics in debug).
    pub fn max_asymmetry(&self) -> F {
        debug_assert!(self.is_square());
        let mut worst = F::zero();
        for i in 0..self.rows {
            for j in 0..i {
                let d = (self.at(i, j) - self.at(j, i)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Element-wise product.
    pub fn hadamard(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::DimensionMismatch(format!(
                "hadamard: {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a * b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add_to_diagonal(&mut self, v: F) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            self.data[i * n + i] += v;
        }
    }

    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

/// Lower-triangular Cholesky factor of `A + jitter·I`.
#[derive(Clone, Debug)]
pub struct Cholesky<F> {
    l: Matrix<F>,
    jitter: F,
}

impl<F: Real> Cholesky<F> {
    /// Factors `a + jitter·I`, escalating `jitter` through `schedule` until
    /// the factorization succeeds.
    pub fn factor_with_schedule(a: &Matrix<F>, schedule: &[f64]) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch("cholesky needs a square matrix".into()));
        }
        let mut max_tried = 0.0f64;
        for &jit in schedule {
            max_tried = jit;
            if let Some(l) = Self::try_factor(a, real::<F>(jit)) {
                return Ok(Cholesky { l, jitter: real::<F>(jit) });
            }
        }
        Err(Error::NotPositiveDefinite { max_jitter: max_tried })
    }

    /// Factorization with the posterior jitter schedule.
    pub fn factor(a: &Matrix<F>) -> Result<Self> {
        Self::factor_with_schedule(a, POSTERIOR_JITTER)
    }

    fn try_factor(a: &Matrix<F>, jitter: F) -> Option<Matrix<F>> {
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            let (done_rows, current) = l.data.split_at_mut(i * n);
            let row_i = &mut current[..n];
            for j in 0..i {
                let row_j = &done_rows[j * n..j * n + j];
                let (prefix, rest) = row_i.split_at_mut(j);
                let s = a.at(i, j) - dot(prefix, row_j);
                let d = done_rows[j * n + j];
                rest[0] = s / d;
            }
            let s = a.at(i, i) + jitter - dot(&row_i[..i], &row_i[..i]);
            if !(s > F::zero()) || !s.is_finite() {
                return None;
            }
            row_i[i] = s.sqrt();
        }
        Some(l)
    }

    pub fn n(&self) -> usize {
        self.l.rows
    }

    pub fn l(&self) -> &Matrix<F> {
        &self.l
    }

    /// Jitter actually added to the diagonal.
    pub fn jitter(&self) -> F {
        self.jitter
    }

    /// log det(A + jitter·I) = 2 Σ ln L_ii.
    pub fn log_det(&self) -> F {
        let n = self.n();
        let mut s = F::zero();
        for i in 0..n {
            s += self.l.at(i, i).ln();
        }
        s + s
    }

    /// Solves L v = b.
    pub fn forward(&self, b: &[F]) -> Vec<F> {
        let n = self.n();
        debug_assert_eq!(b.len(), n);
        let mut v = vec![F::zero(); n];
        for m in 0..n {
            let mut s = b[m];
            let row = &self.l.data[m * n..m * n + m];
            for (p, &lmp) in row.iter().enumerate() {
                s = s - lmp * v[p];
            }
            v[m] = s / self.l.data[m * n + m];
        }
        v
    }

    /// Solves Lᵀ x = b.
    pub fn backward(&self, b: &[F]) -> Vec<F> {
        let n = self.n();
        debug_assert_eq!(b.len(), n);
        let mut x = vec![F::zero(); n];
        for m in (0..n).rev() {
            let mut s = b[m];
            for p in m + 1..n {
                s = s - self.l.at(p, m) * x[p];
            }
            x[m] = s / self.l.at(m, m);
        }
        x
    }

    /// Solves (A + jitter·I) x = b.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        self.backward(&self.forward(b))
    }

    /// ‖L⁻¹ b‖² for every row `b` of `rhs`, written into `out`.
    ///
    /// This is the hot loop of the candidate-variance computation: the rows
    /// are processed in lanes of [`LANES`] so the inner update sweeps
    /// contiguous memory. Each lane runs the same recurrence as [`forward`],
    /// with the subtraction folded per term, so results agree with the
    /// single-RHS path to rounding error.
    pub fn forward_sq_norms(&self, rhs: &[Vec<F>], out: &mut [F]) {
        let n = self.n();
        assert_eq!(rhs.len(), out.len());
        if n == 0 {
            for o in out.iter_mut() {
                *o = F::zero();
            }
            return;
        }
        let ldata = &self.l.data;
        let mut w = vec![F::zero(); n * LANES];
        let mut acc = vec![F::zero(); LANES];
        for (chunk_idx, chunk) in rhs.chunks(LANES).enumerate() {
            let width = chunk.len();
            for (lane, r) in chunk.iter().enumerate() {
                debug_assert_eq!(r.len(), n);
                for m in 0..n {
                    w[m * LANES + lane] = r[m];
                }
            }
            for a in acc.iter_mut() {
                *a = F::zero();
            }
            for m in 0..n {
                let lrow = &ldata[m * n..m * n + m];
                let (prev, rest) = w.split_at_mut(m * LANES);
                let cur = &mut rest[..LANES];
                for (p, &lmp) in lrow.iter().enumerate() {
                    let wp = &prev[p * LANES..p * LANES + LANES];
                    for lane in 0..width {
                        cur[lane] = cur[lane] - lmp * wp[lane];
                    }
                }
                let d = ldata[m * n + m];
                for lane in 0..width {
                    let v = cur[lane] / d;
                    cur[lane] = v;
                    acc[lane] += v * v;
                }
            }
            out[chunk_idx * LANES..chunk_idx * LANES + width].copy_from_slice(&acc[..width]);
        }
    }

    /// L z for a lower-triangular factor (skips the zero upper half).
    pub fn lower_matvec(&self, z: &[F]) -> Vec<F> {
        let n = self.n();
        debug_assert_eq!(z.len(), n);
        (0..n).map(|i| dot(&self.l.data[i * n..i * n + i + 1], &z[..i + 1])).collect()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, v)` with `a = v · diag(eigenvalues) · vᵀ` (columns
/// of `v` are eigenvectors). Intended for the small matrices of empirical
/// kernels (tens of arms).
pub fn symmetric_eigen<F: Real>(a: &Matrix<F>, max_sweeps: usize) -> Result<(Vec<F>, Matrix<F>)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("eigendecomposition needs a square matrix".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::<F>::identity(n);
    if n <= 1 {
        return Ok(((0..n).map(|i| m.at(i, i)).collect(), v));
    }
    let frob = m.data.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt();
    let tol = F::epsilon() * frob.max(F::one());
    for _ in 0..max_sweeps {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m.at(p, q).abs();
            }
        }
        if off <= tol {
            let eig = (0..n).map(|i| m.at(i, i)).collect();
            return Ok((eig, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.at(p, q);
                if apq.abs() <= tol * real::<F>(1e-3) {
                    continue;
                }
                let app = m.at(p, p);
                let aqq = m.at(q, q);
                let tau = (aqq - app) / (real::<F>(2.0) * apq);
                let t = if tau >= F::zero() {
                    F::one() / (tau + (F::one() + tau * tau).sqrt())
                } else {
                    -F::one() / (-tau + (F::one() + tau * tau).sqrt())
                };
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = t * c;
                *m.at_mut(p, p) = app - t * apq;
                *m.at_mut(q, q) = aqq + t * apq;
                *m.at_mut(p, q) = F::zero();
                *m.at_mut(q, p) = F::zero();
                for i in 0..n {
                    if i != p && i != q {
                        let aip = m.at(i, p);
                        let aiq = m.at(i, q);
                        let new_p = c * aip - s * aiq;
                        let new_q = s * aip + c * aiq;
                        *m.at_mut(i, p) = new_p;
                        *m.at_mut(p, i) = new_p;
                        *m.at_mut(i, q) = new_q;
                        *m.at_mut(q, i) = new_q;
                    }
                }
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    *v.at_mut(i, p) = c * vip - s * viq;
                    *v.at_mut(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    Err(Error::EigenDidNotConverge { sweeps: max_sweeps })
}
