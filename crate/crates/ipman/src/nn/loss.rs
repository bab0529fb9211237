//! Binary cross-entropy over a column of clamped predictions.

use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::scalar::Real;

/// Mean BCE and its gradient with respect to the predictions.
///
/// Predictions must lie strictly inside (0,1); the sigmoid output layer
/// guarantees this via clamping.
pub fn bce_loss<F: Real>(predictions: &Matrix2<F>, labels: &[F]) -> Result<(F, Matrix2<F>)> {
    if predictions.cols() != 1 || predictions.rows() != labels.len() {
        return Err(Error::shape(
            "bce_loss",
            format!("{}x1", labels.len()),
            format!("{}x{}", predictions.rows(), predictions.cols()),
        ));
    }
    let n = F::from_usize(labels.len()).unwrap();
    let one = F::one();
    let mut loss = F::zero();
    let mut grad = Matrix2::zeros(labels.len(), 1);
    for (i, &y) in labels.iter().enumerate() {
        let p = predictions.get(i, 0);
        loss += -(y * p.ln() + (one - y) * (one - p).ln());
        // d/dp of mean BCE
        grad.set(i, 0, (p - y) / (p * (one - p) * n));
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::central_diff_gradient;
    use approx::assert_relative_eq;

    #[test]
    fn half_prediction_against_label_one_is_ln_two() {
        let p = Matrix2::from_vec(1, 1, vec![0.5]).unwrap();
        let (loss, _) = bce_loss(&p, &[1.0]).unwrap();
        assert_relative_eq!(loss, std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn near_perfect_prediction_has_tiny_loss() {
        let p = Matrix2::from_vec(1, 1, vec![1.0 - 1e-7]).unwrap();
        let (loss, _) = bce_loss(&p, &[1.0]).unwrap();
        assert_relative_eq!(loss, 1e-7, max_relative = 1e-3);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let preds = vec![0.2, 0.7, 0.45, 0.91];
        let labels = vec![0.0, 1.0, 1.0, 0.0];
        let p = Matrix2::from_vec(4, 1, preds.clone()).unwrap();
        let (_, grad) = bce_loss(&p, &labels).unwrap();
        let f = |x: &[f64]| {
            let m = Matrix2::from_vec(4, 1, x.to_vec()).unwrap();
            bce_loss(&m, &labels).unwrap().0
        };
        let numeric = central_diff_gradient(&f, &preds, 1e-6);
        for i in 0..4 {
            assert_relative_eq!(grad.get(i, 0), numeric[i], max_relative = 1e-5);
        }
    }
}
