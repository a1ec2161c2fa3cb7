//! Event trigger that compares the one-step prediction residual against a
//! time-uniform confidence threshold; firing tells the policy its model no
//! longer explains the incoming data.

use crate::posterior::Prediction;
use crate::scalar::{real, Real};
use crate::{Error, Result};

/// Parameters of the trigger threshold.
#[derive(Clone, Copy, Debug)]
pub struct TriggerConfig<F> {
    delta_b: F,
    sigma_n_sq: F,
}

impl<F: Real> TriggerConfig<F> {
    pub fn new(delta_b: F, sigma_n_sq: F) -> Result<Self> {
        if !(delta_b > F::zero() && delta_b < F::one()) {
            return Err(Error::InvalidParameter(format!(
                "trigger confidence must lie in (0, 1), got {delta_b}"
            )));
        }
        if !(sigma_n_sq > F::zero()) || !sigma_n_sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive and finite, got {sigma_n_sq}"
            )));
        }
        Ok(TriggerConfig { delta_b, sigma_n_sq })
    }

    pub fn delta_b(&self) -> F {
        self.delta_b
    }

    pub fn sigma_n_sq(&self) -> F {
        self.sigma_n_sq
    }
}

/// Outcome of one trigger evaluation.
#[derive(Clone, Copy, Debug)]
pub struct TriggerEvaluation<F> {
    /// Test value: |y − μ|.
    pub psi: F,
    /// Threshold: √ρ_t′ · σ + w̄_t′.
    pub kappa: F,
    /// Reset clock position of the evaluated observation.
    pub t_prime: u64,
    pub fired: bool,
}

fn check_t_prime(t_prime: u64) -> Result<()> {
    if t_prime < 1 {
        return Err(Error::InvalidParameter("reset clock starts at 1".into()));
    }
    Ok(())
}

/// Sequence weights π_t′ = π² t′² / 6, chosen so Σ_{t′≥1} 1/π_t′ = 1.
pub fn pi_t<F: Real>(t_prime: u64) -> Result<F> {
    check_t_prime(t_prime)?;
    let t = real::<F>(t_prime as f64);
    Ok(F::PI() * F::PI() * t * t / real::<F>(6.0))
}

/// Confidence scaling ρ_t′ = 2 ln(2 π_t′ / δ_B). Strictly increasing in t′,
/// decreasing in δ_B.
pub fn rho_t<F: Real>(t_prime: u64, delta_b: F) -> Result<F> {
    if !(delta_b > F::zero() && delta_b < F::one()) {
        return Err(Error::InvalidParameter(format!(
            "trigger confidence must lie in (0, 1), got {delta_b}"
        )));
    }
    let pi = pi_t::<F>(t_prime)?;
    Ok(real::<F>(2.0) * (real::<F>(2.0) * pi / delta_b).ln())
}

/// High-probability noise magnitude w̄_t′ = √(2 σ_n² ln(2 π_t′ / δ_B)),
/// which equals σ_n √ρ_t′.
pub fn noise_bound<F: Real>(t_prime: u64, delta_b: F, sigma_n_sq: F) -> Result<F> {
    if !(sigma_n_sq >= F::zero()) || !sigma_n_sq.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be non-negative, got {sigma_n_sq}"
        )));
    }
    let rho = rho_t::<F>(t_prime, delta_b)?;
    Ok((sigma_n_sq * rho).sqrt())
}

/// Evaluates the trigger for observation `y_t` against the posterior at the
/// queried point, computed from the pre-update dataset. `t_prime` is the
/// reset clock of the incoming observation (dataset size + 1), so the very
/// first step after a reset evaluates at t′ = 1 against the prior.
pub fn evaluate_trigger<F: Real>(
    config: &TriggerConfig<F>,
    posterior_at_xt: Prediction<F>,
    y_t: F,
    t_prime: u64,
) -> Result<TriggerEvaluation<F>> {
    let psi = (y_t - posterior_at_xt.mean).abs();
    let rho = rho_t::<F>(t_prime, config.delta_b)?;
    let w_bar = noise_bound::<F>(t_prime, config.delta_b, config.sigma_n_sq)?;
    let kappa = rho.sqrt() * posterior_at_xt.std_dev() + w_bar;
    Ok(TriggerEvaluation { psi, kappa, t_prime, fired: psi > kappa })
}
