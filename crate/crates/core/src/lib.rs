//! Bayesian optimization for objectives that drift over time.
//!
//! The crate provides a small GP toolbox (squared-exponential and empirical
//! kernels, static and temporally discounted posteriors), an event trigger
//! that detects change through the one-step prediction residual, four UCB
//! policies differing in how they forget stale data, synthetic drifting
//! objectives, and a deterministic benchmark harness that writes regret
//! traces and summaries as CSV.
//!
//! Numeric modules are generic over [`scalar::Real`] (`f32` or `f64`);
//! `f64` aliases for the common types are exported below. The benchmark
//! harness in [`bench`] is concrete `f64`.

pub mod algorithms;
pub mod bench;
pub mod kernels;
pub mod linalg;
pub mod posterior;
pub mod scalar;
pub mod synthetic;
pub mod trigger;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("arm index {index} out of range for {n_arms} arms")]
    ArmOutOfRange { index: usize, n_arms: usize },
    #[error("matrix is not positive definite (jitter escalated to {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("eigendecomposition did not converge within {sweeps} sweeps")]
    EigenDidNotConverge { sweeps: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

// f64 instantiations of the generic core types.
pub type MatrixF64 = linalg::Matrix<f64>;
pub type SeKernelF64 = kernels::SquaredExponentialKernel<f64>;
pub type EmpiricalKernelF64 = kernels::EmpiricalKernel<f64>;
pub type TemporalFactorsF64 = kernels::TemporalFactors<f64>;
pub type DatasetF64<P> = posterior::Dataset<P, f64>;
pub type NoiseModelF64 = posterior::NoiseModel<f64>;
pub type PredictionF64 = posterior::Prediction<f64>;
pub type GridSamplerF64 = posterior::GridSampler<f64>;
pub type TriggerConfigF64 = trigger::TriggerConfig<f64>;
pub type BetaScheduleF64 = algorithms::BetaSchedule<f64>;
