use super::Tensor;
use crate::error::{Error, Result};

/// Loss attached to a model's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax over the last axis followed by negative log-likelihood of the
    /// integer class label; labels are a length-N tensor of class indices.
    CrossEntropy,
    /// Mean of squared differences over every element; targets share the
    /// prediction shape.
    MeanSquaredError,
}

fn check_batch(predictions: &Tensor, labels: &Tensor) -> Result<()> {
    if predictions.rank() != 2 {
        return Err(Error::InvalidShape {
            shape: predictions.shape().to_vec(),
            reason: "predictions must be (batch, outputs)".into(),
        });
    }
    if labels.batch() != predictions.batch() {
        return Err(Error::ShapeMismatch {
            context: "loss batch dimension".into(),
            expected: vec![predictions.batch()],
            actual: vec![labels.batch()],
        });
    }
    Ok(())
}

fn class_index(label: f64, num_classes: usize) -> Result<usize> {
    if label < 0.0 || label.fract() != 0.0 || label >= num_classes as f64 {
        return Err(Error::LabelOutOfRange { label, num_classes });
    }
    Ok(label as usize)
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Batch-mean loss.
pub fn compute_loss(predictions: &Tensor, labels: &Tensor, kind: LossKind) -> Result<f64> {
    check_batch(predictions, labels)?;
    let n = predictions.batch();
    let k = predictions.shape()[1];
    let loss = match kind {
        LossKind::CrossEntropy => {
            if labels.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "cross-entropy labels".into(),
                    expected: vec![n],
                    actual: labels.shape().to_vec(),
                });
            }
            let mut total = 0.0;
            for (row, &label) in predictions.data().chunks(k).zip(labels.data()) {
                let c = class_index(label, k)?;
                total -= log_softmax_row(row)[c];
            }
            total / n as f64
        }
        LossKind::MeanSquaredError => {
            if labels.shape() != predictions.shape() {
                return Err(Error::ShapeMismatch {
                    context: "mean-squared-error targets".into(),
                    expected: predictions.shape().to_vec(),
                    actual: labels.shape().to_vec(),
                });
            }
            let sum: f64 = predictions
                .data()
                .iter()
                .zip(labels.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            sum / predictions.len() as f64
        }
    };
    // log-softmax can round a perfect prediction to a tiny negative number
    Ok(loss.max(0.0))
}

/// Gradient of [`compute_loss`] with respect to the predictions.
pub fn loss_gradient(predictions: &Tensor, labels: &Tensor, kind: LossKind) -> Result<Tensor> {
    check_batch(predictions, labels)?;
    let n = predictions.batch();
    let k = predictions.shape()[1];
    let mut grad = vec![0.0; predictions.len()];
    match kind {
        LossKind::CrossEntropy => {
            if labels.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "cross-entropy labels".into(),
                    expected: vec![n],
                    actual: labels.shape().to_vec(),
                });
            }
            for (i, (row, &label)) in predictions.data().chunks(k).zip(labels.data()).enumerate() {
                let c = class_index(label, k)?;
                let logp = log_softmax_row(row);
                for j in 0..k {
                    let target = if j == c { 1.0 } else { 0.0 };
                    grad[i * k + j] = (logp[j].exp() - target) / n as f64;
                }
            }
        }
        LossKind::MeanSquaredError => {
            if labels.shape() != predictions.shape() {
                return Err(Error::ShapeMismatch {
                    context: "mean-squared-error targets".into(),
                    expected: predictions.shape().to_vec(),
                    actual: labels.shape().to_vec(),
                });
            }
            let scale = 2.0 / predictions.len() as f64;
            for ((g, p), t) in grad.iter_mut().zip(predictions.data()).zip(labels.data()) {
                *g = scale * (p - t);
            }
        }
    }
    Ok(Tensor::from_raw(predictions.shape().to_vec(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_correct_prediction_has_zero_cross_entropy() {
        let p = Tensor::from_rows(&[vec![1000.0, 0.0, 0.0]]).unwrap();
        let y = Tensor::vector(&[0.0]).unwrap();
        let l = compute_loss(&p, &y, LossKind::CrossEntropy).unwrap();
        assert!(l.abs() < 1e-9);
    }

    #[test]
    fn uniform_logits_give_log_k() {
        for k in [2usize, 3, 10] {
            let p = Tensor::zeros(&[4, k]);
            let y = Tensor::vector(&[0.0, 1.0, 0.0, 1.0]).unwrap();
            let l = compute_loss(&p, &y, LossKind::CrossEntropy).unwrap();
            assert!((l - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_direct_formula() {
        let p = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let t = Tensor::new(vec![2, 1], vec![0.0, 0.0]).unwrap();
        assert_eq!(
            compute_loss(&p, &t, LossKind::MeanSquaredError).unwrap(),
            2.5
        );
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let p = Tensor::zeros(&[1, 3]);
        for bad in [3.0, -1.0, 0.5] {
            let y = Tensor::vector(&[bad]).unwrap();
            assert!(matches!(
                compute_loss(&p, &y, LossKind::CrossEntropy),
                Err(Error::LabelOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let p = Tensor::from_rows(&[vec![0.3, -1.2, 0.7], vec![2.0, 0.1, -0.4]]).unwrap();
        let y = Tensor::vector(&[2.0, 0.0]).unwrap();
        let g = loss_gradient(&p, &y, LossKind::CrossEntropy).unwrap();
        let eps = 1e-6;
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.data_mut()[i] += eps;
            let mut minus = p.clone();
            minus.data_mut()[i] -= eps;
            let fd = (compute_loss(&plus, &y, LossKind::CrossEntropy).unwrap()
                - compute_loss(&minus, &y, LossKind::CrossEntropy).unwrap())
                / (2.0 * eps);
            assert!((fd - g.data()[i]).abs() < 1e-8);
        }
    }
}
