//! Mini-batch training with Adam and early stopping on validation accuracy.

use super::{stack_examples, Model, ModelError};
use crate::nn::{
    adam_step, softmax_cross_entropy, softmax_cross_entropy_backward, AdamParams, AdamState,
    NnError,
};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    /// Consecutive epochs without a validation improvement tolerated before
    /// stopping. `None` disables early stopping.
    pub patience: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

fn check_dataset(examples: &[Tensor], labels: &[usize]) -> Result<(), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::Nn(NnError::EmptyInput { context: "training examples" }));
    }
    if examples.len() != labels.len() {
        return Err(ModelError::Nn(NnError::ShapeMismatch {
            context: "examples and labels",
            lhs: vec![examples.len()],
            rhs: vec![labels.len()],
        }));
    }
    Ok(())
}

/// Index ranges for one epoch; a trailing singleton is folded into the
/// previous batch so train-mode batch normalization always sees 2+ examples.
fn batch_bounds(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut start = 0;
    while start < n {
        let end = usize::min(start + batch_size, n);
        bounds.push((start, end));
        start = end;
    }
    if bounds.len() >= 2 {
        let (last_start, last_end) = *bounds.last().unwrap();
        if last_end - last_start == 1 {
            bounds.pop();
            bounds.last_mut().unwrap().1 = last_end;
        }
    }
    bounds
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One pass over the dataset in shuffled mini-batches, updating `model` and
/// `opt` in place.
pub fn train_epoch(
    model: &mut Model,
    examples: &[Tensor],
    labels: &[usize],
    batch_size: usize,
    opt: &mut AdamState,
    adam: &AdamParams,
    rng: &mut RngState,
) -> Result<EpochStats, ModelError> {
    check_dataset(examples, labels)?;
    if batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch size must be nonzero".to_string()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    rng.shuffle(&mut order);

    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for (start, end) in batch_bounds(order.len(), batch_size) {
        let idx = &order[start..end];
        let batch: Vec<Tensor> = idx.iter().map(|&i| examples[i].clone()).collect();
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let x = stack_examples(&batch)?;

        let (logits, caches) = model.forward_train(&x, rng)?;
        let (loss, probs) = softmax_cross_entropy(&logits, &batch_labels)?;
        let d_logits = softmax_cross_entropy_backward(&probs, &batch_labels);
        let grads = model.backward(&caches, &d_logits);
        let (names, tensors) = model.params.names_and_tensors_mut();
        adam_step(names, tensors, &grads, opt, adam)?;

        total_loss += loss * idx.len() as f64;
        for (r, &label) in batch_labels.iter().enumerate() {
            if argmax_row(probs.row(r)) == label {
                correct += 1;
            }
        }
    }
    Ok(EpochStats {
        mean_loss: total_loss / examples.len() as f64,
        accuracy: correct as f64 / examples.len() as f64,
    })
}

/// Fraction of examples whose highest logit matches the label, evaluated in
/// inference mode.
pub fn evaluate_top1(
    model: &Model,
    examples: &[Tensor],
    labels: &[usize],
    batch_size: usize,
) -> Result<f64, ModelError> {
    check_dataset(examples, labels)?;
    let mut correct = 0usize;
    let mut start = 0;
    while start < examples.len() {
        let end = usize::min(start + batch_size.max(1), examples.len());
        let x = stack_examples(&examples[start..end])?;
        let logits = model.forward_eval(&x)?;
        for r in 0..(end - start) {
            if argmax_row(logits.row(r)) == labels[start + r] {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Trains with early stopping on validation accuracy and restores the best
/// weights (and running stats) before returning.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    model: &mut Model,
    train_x: &[Tensor],
    train_y: &[usize],
    val_x: &[Tensor],
    val_y: &[usize],
    config: &FitConfig,
) -> Result<FitHistory, ModelError> {
    check_dataset(train_x, train_y)?;
    check_dataset(val_x, val_y)?;
    if config.epochs == 0 {
        return Err(ModelError::InvalidConfig("epochs must be nonzero".to_string()));
    }

    let mut rng = RngState::new(config.seed);
    let mut opt = AdamState::new(model.params.tensors());
    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params: Vec<Tensor> = model.params.tensors().to_vec();
    let mut best_stats = model.stats.clone();
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let stats = train_epoch(
            model,
            train_x,
            train_y,
            config.batch_size,
            &mut opt,
            &config.adam,
            &mut rng,
        )?;
        let val_accuracy = evaluate_top1(model, val_x, val_y, config.batch_size)?;
        history.push(EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            train_accuracy: stats.accuracy,
            val_accuracy,
        });
        if val_accuracy > best_val {
            best_val = val_accuracy;
            best_epoch = epoch;
            best_params = model.params.tensors().to_vec();
            best_stats = model.stats.clone();
            stale = 0;
        } else {
            stale += 1;
            if let Some(patience) = config.patience {
                if stale > patience {
                    break;
                }
            }
        }
    }

    for (slot, saved) in model.params.tensors_mut().iter_mut().zip(best_params) {
        *slot = saved;
    }
    model.stats = best_stats;
    Ok(FitHistory { epochs: history, best_epoch, best_val_accuracy: best_val })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_head_classifier, HeadClassifierConfig};

    fn separable_dataset(n_per_class: usize, seed: u64) -> (Vec<Tensor>, Vec<usize>) {
        let mut rng = RngState::new(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_per_class * 2 {
            let class = i % 2;
            let center = if class == 0 { -2.0 } else { 2.0 };
            xs.push(Tensor::new(vec![2], vec![
                center + 0.3 * rng.next_gaussian(),
                -center + 0.3 * rng.next_gaussian(),
            ]));
            ys.push(class);
        }
        (xs, ys)
    }

    fn toy_model(seed: u64) -> Model {
        build_head_classifier(
            &HeadClassifierConfig { input_dim: 2, num_classes: 2, dropout_p: 0.0 },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let (xs, ys) = separable_dataset(8, 10);
        let mut model = toy_model(3);
        let before: Vec<Tensor> = model.params.tensors().to_vec();
        let mut opt = AdamState::new(model.params.tensors());
        let adam = AdamParams { lr: 0.0, ..AdamParams::default() };
        let mut rng = RngState::new(1);
        let stats =
            train_epoch(&mut model, &xs, &ys, 4, &mut opt, &adam, &mut rng).unwrap();
        assert!(stats.mean_loss.is_finite());
        for (b, a) in before.iter().zip(model.params.tensors()) {
            assert_eq!(b.data(), a.data(), "lr 0 must not move parameters");
        }
    }

    #[test]
    fn separable_data_reaches_high_accuracy() {
        let (xs, ys) = separable_dataset(20, 5);
        let (vx, vy) = separable_dataset(10, 6);
        let mut model = toy_model(7);
        let config = FitConfig {
            epochs: 60,
            batch_size: 8,
            adam: AdamParams { lr: 0.05, ..AdamParams::default() },
            patience: None,
            seed: 11,
        };
        let history = fit(&mut model, &xs, &ys, &vx, &vy, &config).unwrap();
        assert!(
            history.best_val_accuracy >= 0.99,
            "separable data should be learned, got {}",
            history.best_val_accuracy
        );
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (xs, ys) = separable_dataset(10, 2);
        let (vx, vy) = separable_dataset(5, 3);
        let config = FitConfig {
            epochs: 5,
            batch_size: 4,
            adam: AdamParams::default(),
            patience: None,
            seed: 9,
        };
        let mut a = toy_model(4);
        let mut b = toy_model(4);
        let ha = fit(&mut a, &xs, &ys, &vx, &vy, &config).unwrap();
        let hb = fit(&mut b, &xs, &ys, &vx, &vy, &config).unwrap();
        assert_eq!(ha, hb);
        for (ta, tb) in a.params.tensors().iter().zip(b.params.tensors()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn early_stopping_counts_stale_epochs() {
        // lr 0 freezes the model, so validation accuracy never improves after
        // the first epoch; patience 0 stops at epoch 2.
        let (xs, ys) = separable_dataset(6, 1);
        let mut model = toy_model(2);
        let config = FitConfig {
            epochs: 10,
            batch_size: 4,
            adam: AdamParams { lr: 0.0, ..AdamParams::default() },
            patience: Some(0),
            seed: 5,
        };
        let history = fit(&mut model, &xs, &ys, &xs, &ys, &config).unwrap();
        assert_eq!(history.epochs.len(), 2);
        assert_eq!(history.best_epoch, 0);
    }

    #[test]
    fn best_weights_are_restored() {
        let (xs, ys) = separable_dataset(12, 8);
        let (vx, vy) = separable_dataset(6, 9);
        let mut model = toy_model(1);
        let config = FitConfig {
            epochs: 15,
            batch_size: 6,
            adam: AdamParams { lr: 0.05, ..AdamParams::default() },
            patience: None,
            seed: 2,
        };
        let history = fit(&mut model, &xs, &ys, &vx, &vy, &config).unwrap();
        let acc = evaluate_top1(&model, &vx, &vy, 6).unwrap();
        assert_eq!(
            acc, history.best_val_accuracy,
            "restored weights must reproduce the best validation accuracy"
        );
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut model = toy_model(0);
        let mut opt = AdamState::new(model.params.tensors());
        let mut rng = RngState::new(0);
        let err = train_epoch(
            &mut model,
            &[],
            &[],
            4,
            &mut opt,
            &AdamParams::default(),
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::Nn(NnError::EmptyInput { context: "training examples" })
        );
    }

    #[test]
    fn trailing_singleton_batch_is_merged() {
        assert_eq!(batch_bounds(9, 4), vec![(0, 4), (4, 9)]);
        assert_eq!(batch_bounds(8, 4), vec![(0, 4), (4, 8)]);
        assert_eq!(batch_bounds(1, 4), vec![(0, 1)]);
        assert_eq!(batch_bounds(5, 2), vec![(0, 2), (2, 5)]);
    }
}
