//! Central finite differences, used as an independent oracle for every
//! analytic gradient in the crate.

use crate::scalar::Real;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_diff_gradient<F: Real>(f: &impl Fn(&[F]) -> F, x: &[F], h: f64) -> Vec<F> {
    let h = F::from_f64_c(h);
    let two = F::from_f64_c(2.0);
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad.push((fp - fm) / (two * h));
    }
    grad
}

/// Max relative error between two gradient vectors, with an absolute floor so
/// near-zero components compare sanely.
pub fn max_relative_error<F: Real>(analytic: &[F], numeric: &[F], floor: f64) -> f64 {
    let floor = F::from_f64_c(floor);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs()).max(floor);
            ((a - n).abs() / denom).to_f64_c()
        })
        .fold(0.0, f64::max)
}
