//! Pinned quantile rule used everywhere a VaR appears: the ascending order
//! statistic at index ceil(alpha * m), 1-based, no interpolation.

use crate::scalar::Real;

/// `alpha` must satisfy `0 < alpha <= 1`; `values` must be nonempty.
pub fn order_statistic<F: Real>(values: &[F], alpha: f64) -> F {
    assert!(!values.is_empty(), "order_statistic of empty slice");
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha out of (0,1]");
    let m = values.len();
    let k = ((alpha * m as f64).ceil() as usize).clamp(1, m);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in order_statistic"));
    sorted[k - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ninth_of_ten() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(order_statistic(&v, 0.9), 9.0);
        assert_eq!(order_statistic(&v, 1.0), 10.0);
        assert_eq!(order_statistic(&v, 0.05), 1.0);
    }

    #[test]
    fn constant_vector_for_all_alpha() {
        let v = vec![3.25f64; 7];
        for alpha in [0.01, 0.5, 0.9, 1.0] {
            assert_eq!(order_statistic(&v, alpha), 3.25);
        }
    }
}
