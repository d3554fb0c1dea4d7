//! Categorical cross-entropy over probability rows.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::LOG_EPS;

/// Mean over the batch of -sum_c label_c * ln(prob_c + 1e-12).
pub fn cross_entropy_loss(probs: &Tensor, labels: &Tensor) -> Result<f64> {
    if probs.shape() != labels.shape() || probs.shape().len() != 2 {
        return Err(Error::config(format!(
            "cross-entropy wants matching 2-D shapes, got {:?} and {:?}",
            probs.shape(),
            labels.shape()
        )));
    }
    let n = probs.shape()[0] as f64;
    let total: f64 = probs
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| -y * (p + LOG_EPS).ln())
        .sum();
    Ok(total / n)
}

/// Gradient of softmax followed by [`cross_entropy_loss`] with respect to the
/// logits: (probs - labels) / N. The 1e-12 inside the log perturbs this by
/// O(1e-12), far below the finite-difference tolerance used to verify it.
pub fn softmax_cross_entropy_grad(probs: &Tensor, labels: &Tensor) -> Tensor {
    assert_eq!(probs.shape(), labels.shape(), "grad shape mismatch");
    let n = probs.shape()[0] as f64;
    let mut grad = probs.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(labels.data()) {
        *g = (*g - y) / n;
    }
    grad
}

/// One-hot encode class indices into [N,C].
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), num_classes]);
    for (i, &c) in labels.iter().enumerate() {
        if c >= num_classes {
            return Err(Error::data(format!("label {c} out of range for {num_classes} classes")));
        }
        t.data_mut()[i * num_classes + c] = 1.0;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn confident_correct_is_near_zero() {
        let probs = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let labels = one_hot(&[0], 2).unwrap();
        let l = cross_entropy_loss(&probs, &labels).unwrap();
        assert_abs_diff_eq!(l, -(1.0f64 + LOG_EPS).ln(), epsilon = 1e-15);
        assert!(l.abs() < 1e-11);
    }

    #[test]
    fn uniform_two_class_is_ln_two() {
        let probs = Tensor::from_vec(&[1, 2], vec![0.5, 0.5]).unwrap();
        let labels = one_hot(&[0], 2).unwrap();
        let l = cross_entropy_loss(&probs, &labels).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn wrong_confident_prediction() {
        let probs = Tensor::from_vec(&[1, 2], vec![0.9, 0.1]).unwrap();
        let labels = one_hot(&[1], 2).unwrap();
        let l = cross_entropy_loss(&probs, &labels).unwrap();
        assert_abs_diff_eq!(l, -(0.1f64 + 1e-12).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 2.302585, epsilon = 1e-6);
    }

    #[test]
    fn mean_over_batch() {
        let probs = Tensor::from_vec(&[2, 2], vec![0.5, 0.5, 0.9, 0.1]).unwrap();
        let labels = one_hot(&[0, 0], 2).unwrap();
        let l = cross_entropy_loss(&probs, &labels).unwrap();
        let want = (-(0.5f64 + LOG_EPS).ln() - (0.9f64 + LOG_EPS).ln()) / 2.0;
        assert_abs_diff_eq!(l, want, epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let probs = Tensor::zeros(&[2, 3]);
        let labels = Tensor::zeros(&[2, 2]);
        assert!(cross_entropy_loss(&probs, &labels).is_err());
    }

    #[test]
    fn grad_matches_finite_differences_through_softmax() {
        use crate::ops::activation::softmax;
        let logits = Tensor::from_vec(&[2, 3], vec![0.3, -1.2, 0.7, 2.0, 0.1, -0.5]).unwrap();
        let labels = one_hot(&[2, 0], 3).unwrap();
        let probs = softmax(&logits).unwrap();
        let grad = softmax_cross_entropy_grad(&probs, &labels);
        let h = 1e-6;
        for idx in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[idx] += h;
            let mut minus = logits.clone();
            minus.data_mut()[idx] -= h;
            let lp = cross_entropy_loss(&softmax(&plus).unwrap(), &labels).unwrap();
            let lm = cross_entropy_loss(&softmax(&minus).unwrap(), &labels).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert_abs_diff_eq!(grad.data()[idx], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot(&[2], 2).is_err());
        let t = one_hot(&[1, 0], 2).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
