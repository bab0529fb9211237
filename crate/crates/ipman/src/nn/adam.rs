//! Bias-corrected Adam update over a flat parameter vector.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon_hat: F,
}

impl<F: Real> AdamHyper<F> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon_hat: f64) -> Self {
        Self {
            learning_rate: F::from_f64_c(learning_rate),
            beta1: F::from_f64_c(beta1),
            beta2: F::from_f64_c(beta2),
            epsilon_hat: F::from_f64_c(epsilon_hat),
        }
    }

    /// GAN-standard settings: beta1 = 0.5, beta2 = 0.999.
    pub fn gan_default(learning_rate: f64) -> Self {
        Self::new(learning_rate, 0.5, 0.999, 1e-8)
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub hyper: AdamHyper<F>,
    first_moment: Vec<F>,
    second_moment: Vec<F>,
    step_count: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(n_params: usize, hyper: AdamHyper<F>) -> Self {
        Self {
            hyper,
            first_moment: vec![F::zero(); n_params],
            second_moment: vec![F::zero(); n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// Applies one bias-corrected Adam update in place and increments the step
/// counter.
pub fn adam_step<F: Real>(state: &mut AdamState<F>, params: &mut [F], grads: &[F]) -> Result<()> {
    if params.len() != state.first_moment.len() || grads.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            state.first_moment.len(),
            format!("params {}, grads {}", params.len(), grads.len()),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let h = state.hyper;
    let one = F::one();
    let bc1 = one - h.beta1.powi(t);
    let bc2 = one - h.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = &mut state.first_moment[i];
        *m = h.beta1 * *m + (one - h.beta1) * g;
        let v = &mut state.second_moment[i];
        *v = h.beta2 * *v + (one - h.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        params[i] = params[i] - h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon_hat);
    }
    Ok(())
}
