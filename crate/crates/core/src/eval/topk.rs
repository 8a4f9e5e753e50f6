//! Top-k accuracy under a deterministic tie rule.

use super::{EvalError, Prediction, PredictionSet};

/// Number of classes ranked strictly ahead of the true label: any class with
/// higher probability, or equal probability at a lower index. Rank 0 means
/// the true label wins top-1.
pub(crate) fn true_label_rank(p: &Prediction) -> usize {
    let probs = p.probs.values();
    let t = p.true_label;
    probs
        .iter()
        .enumerate()
        .filter(|&(c, &v)| v > probs[t] || (v == probs[t] && c < t))
        .count()
}

/// Fraction of samples whose true label lands in the k top-ranked classes.
pub fn topk_accuracy(preds: &PredictionSet, k: usize) -> Result<f64, EvalError> {
    let classes = preds.classes();
    if k == 0 || k > classes {
        return Err(EvalError::KOutOfRange { k, classes });
    }
    let hits = preds
        .predictions()
        .iter()
        .filter(|p| true_label_rank(p) < k)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}
