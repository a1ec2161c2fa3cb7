//! Shared oracle for the integration tests: a second, independent route to
//! the posterior. Gauss-Jordan inversion instead of Cholesky, powf-based
//! decay instead of factor tables, a closed-form squared-exponential
//! instead of the library kernel. Agreement between the two routes is the
//! point, so nothing here may call into the code paths under test.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tvbo_core::posterior::{Dataset, Observation};

/// A randomized squared-exponential regression problem.
pub struct Instance {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<u64>,
    pub values: Vec<f64>,
    pub queries: Vec<Vec<f64>>,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub sigma_n_sq: f64,
    pub t_query: u64,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let d = rng.random_range(1..=3);
    let n = rng.random_range(1..=20);
    let m = rng.random_range(1..=8);
    let lengthscales: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.5)).collect();
    let signal_variance = rng.random_range(0.5..2.0);
    let sigma_n_sq = rng.random_range(0.01..0.5);
    let rand_point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d).map(|_| rng.random_range(0.0..1.0)).collect()
    };
    let points: Vec<Vec<f64>> = (0..n).map(|_| rand_point(rng)).collect();
    let queries: Vec<Vec<f64>> = (0..m).map(|_| rand_point(rng)).collect();
    let mut times = Vec::with_capacity(n);
    let mut t = 0u64;
    for _ in 0..n {
        t += rng.random_range(1..=3);
        times.push(t);
    }
    let t_query = t + rng.random_range(1..=3);
    let values: Vec<f64> =
        (0..n).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    Instance { points, times, values, queries, lengthscales, signal_variance, sigma_n_sq, t_query }
}

pub fn instance_dataset(inst: &Instance) -> Dataset<Vec<f64>, f64> {
    let mut data = Dataset::new();
    for i in 0..inst.points.len() {
        data.append(Observation {
            point: inst.points[i].clone(),
            value: inst.values[i],
            t_abs: inst.times[i],
        })
        .expect("strictly increasing times");
    }
    data
}

/// Inverts a dense symmetric positive definite matrix by Gauss-Jordan with
/// partial pivoting. Panics on singular input; n stays small in tests.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        assert!(aug[pivot][col].abs() > 1e-14, "singular matrix at column {col}");
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in &mut aug[col] {
            *v /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = aug[row][col];
            if f == 0.0 {
                continue;
            }
            for k in 0..2 * n {
                aug[row][k] -= f * aug[col][k];
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Squared-exponential covariance written out directly:
/// sv * exp(-1/2 * sum_i ((a_i-b_i)/l_i)^2).
pub fn se_eval(a: &[f64], b: &[f64], lengthscales: &[f64], signal_variance: f64) -> f64 {
    let q: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((&x, &y), &l)| ((x - y) / l) * ((x - y) / l))
        .sum();
    signal_variance * (-0.5 * q).exp()
}

/// Baseline numerical stabilizer of the library's posterior
/// factorizations (first entry of its jitter schedule). The oracle adds
/// the same constant so both routes target the same linear system.
pub const BASELINE_JITTER: f64 = 1e-10;

/// Posterior mean and variance at `query` from first principles: build the
/// decayed covariance matrix entry by entry, invert it densely, and take
/// the quadratic forms. `epsilon = 0` is the static model.
pub fn oracle_posterior<P>(
    kern: &dyn Fn(&P, &P) -> f64,
    points: &[P],
    times: &[u64],
    values: &[f64],
    query: &P,
    t_query: u64,
    epsilon: f64,
    sigma_n_sq: f64,
) -> (f64, f64) {
    assert_eq!(points.len(), times.len());
    assert_eq!(points.len(), values.len());
    let n = points.len();
    let decay = |lag: u64| (1.0 - epsilon).powf(lag as f64 / 2.0);
    let prior = kern(query, query);
    if n == 0 {
        return (0.0, prior);
    }
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = kern(&points[i], &points[j]) * decay(times[i].abs_diff(times[j]));
        }
        k[i][i] += sigma_n_sq + BASELINE_JITTER;
    }
    let inv = invert(&k);
    let cross: Vec<f64> = (0..n)
        .map(|i| {
            assert!(t_query >= times[i], "query must not precede the data");
            kern(query, &points[i]) * decay(t_query - times[i])
        })
        .collect();
    let mut mean = 0.0;
    let mut explained = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += inv[i][j] * values[j];
        }
        mean += cross[i] * row;
        let mut rowk = 0.0;
        for j in 0..n {
            rowk += inv[i][j] * cross[j];
        }
        explained += cross[i] * rowk;
    }
    (mean, prior - explained)
}

/// Upper confidence score the policies maximize.
pub fn oracle_ucb(mean: f64, variance: f64, beta: f64) -> f64 {
    mean + beta.sqrt() * variance.max(0.0).sqrt()
}

/// Residual-test threshold written out directly:
/// kappa = sqrt(2 ln(pi^2 t'^2 / (3 delta_b))) * sigma
///       + sqrt(2 sigma_n^2 ln(pi^2 t'^2 / (3 delta_b))).
/// Both logs share pi_t' = pi^2 t'^2 / 6 through 2 pi_t' / delta_b.
pub fn oracle_kappa(t_prime: u64, delta_b: f64, sigma_n_sq: f64, sigma_post: f64) -> f64 {
    let pi_t = std::f64::consts::PI.powi(2) * (t_prime as f64).powi(2) / 6.0;
    let log_term = (2.0 * pi_t / delta_b).ln();
    (2.0 * log_term).sqrt() * sigma_post + (2.0 * sigma_n_sq * log_term).sqrt()
}
