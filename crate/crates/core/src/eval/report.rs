//! Error analysis reports and the results table.

use serde::{Deserialize, Serialize};

use crate::data::DatasetManifest;

use super::topk::{topk_accuracy, true_label_rank};
use super::{EvalError, PredictionSet};

/// Per-model evaluation summary. `top5` uses k = min(5, C) so small toy
/// vocabularies still produce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    #[serde(rename = "top-1")]
    pub top1: f64,
    #[serde(rename = "top-5")]
    pub top5: f64,
    pub samples: usize,
    pub misclassified_ids: Vec<String>,
    /// Among misclassified samples, the fraction whose subject has exactly
    /// one record in the training manifest; 0 when nothing was misclassified.
    pub single_training_record_fraction: f64,
}

/// Scores a prediction set against the training manifest's label coverage.
///
/// A sample counts as misclassified when its true label loses top-1 under
/// the same tie rule as `topk_accuracy`, so `top1` always equals
/// 1 - misclassified/samples.
pub fn error_report(
    preds: &PredictionSet,
    train: &DatasetManifest,
    model: &str,
) -> Result<EvalReport, EvalError> {
    let classes = preds.classes();
    if classes != train.num_classes() {
        return Err(EvalError::InvalidPredictions(format!(
            "predictions cover {classes} classes but the training manifest has {}",
            train.num_classes()
        )));
    }

    let mut train_counts = vec![0usize; train.num_classes()];
    for idx in train.label_indices() {
        train_counts[idx] += 1;
    }

    let mut misclassified_ids = Vec::new();
    let mut singles = 0usize;
    for p in preds.predictions() {
        if true_label_rank(p) != 0 {
            misclassified_ids.push(p.id.clone());
            if train_counts[p.true_label] == 1 {
                singles += 1;
            }
        }
    }
    let single_training_record_fraction = if misclassified_ids.is_empty() {
        0.0
    } else {
        singles as f64 / misclassified_ids.len() as f64
    };

    Ok(EvalReport {
        model: model.to_string(),
        top1: topk_accuracy(preds, 1)?,
        top5: topk_accuracy(preds, classes.min(5))?,
        samples: preds.len(),
        misclassified_ids,
        single_training_record_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub model: String,
    #[serde(rename = "top-1")]
    pub top1: f64,
    #[serde(rename = "top-5")]
    pub top5: f64,
}

impl From<&EvalReport> for ResultsRow {
    fn from(report: &EvalReport) -> Self {
        ResultsRow {
            model: report.model.clone(),
            top1: report.top1,
            top5: report.top5,
        }
    }
}

/// Accuracy table over several models, one row per model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
}

impl ResultsTable {
    /// Plain-text rendering with aligned columns for terminal output.
    pub fn render_text(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .max()
            .unwrap_or(5)
            .max("Model".len());
        let mut out = format!("{:<name_width$}  {:>8}  {:>8}\n", "Model", "Top-1", "Top-5");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<name_width$}  {:>8.4}  {:>8.4}\n",
                row.model, row.top1, row.top5
            ));
        }
        out
    }
}
