//! Numerically stable softmax and cross-entropy loss.

use super::NnError;
use crate::tensor::Tensor;

/// Row-wise softmax of a rank-2 tensor, stabilized by subtracting the row max.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (rows, cols) = logits.dims2();
    let mut out = vec![0.0; logits.len()];
    for r in 0..rows {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = libm::exp(v - max);
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    Tensor::new(vec![rows, cols], out)
}

/// Mean cross-entropy over the batch, with the softmax probabilities.
///
/// The loss is computed through log-sum-exp, so logits of magnitude 1e3 do not
/// overflow.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor), NnError> {
    let (batch, classes) = logits.dims2();
    if classes < 2 {
        return Err(NnError::ShapeMismatch {
            context: "softmax_cross_entropy needs at least 2 classes",
            lhs: logits.shape().to_vec(),
            rhs: vec![batch, 2],
        });
    }
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch {
            context: "softmax_cross_entropy labels",
            lhs: logits.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    for &label in labels {
        if label >= classes {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
    }
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum::<f64>();
        // -log p = log_sum_exp(logits) - logit[label]
        loss += libm::log(log_sum) + max - row[label];
    }
    Ok((loss / batch as f64, probs))
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(probs - onehot) / batch`.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Tensor {
    let (batch, classes) = probs.dims2();
    let mut grad = probs.data().to_vec();
    for (r, &label) in labels.iter().enumerate() {
        grad[r * classes + label] -= 1.0;
    }
    for g in grad.iter_mut() {
        *g /= batch as f64;
    }
    Tensor::new(vec![batch, classes], grad)
}
