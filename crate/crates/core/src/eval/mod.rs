//! Accuracy metrics and machine-readable result reports.

mod report;
mod topk;

pub use report::{error_report, EvalReport, ResultsRow, ResultsTable};
pub use topk::topk_accuracy;

use crate::ensemble::{EnsembleError, ProbVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid prediction set: {0}")]
    InvalidPredictions(String),
    #[error("k must be in 1..={classes}, got {k}")]
    KOutOfRange { k: usize, classes: usize },
    #[error("prediction {id:?} has class index {label} outside the {classes}-class vocabulary")]
    UnknownLabel {
        id: String,
        label: usize,
        classes: usize,
    },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// One scored sample: the model's class probabilities and the ground truth.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub id: String,
    pub true_label: usize,
    pub probs: ProbVector,
}

/// Non-empty, with one class count shared by every sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct PredictionSet {
    predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(predictions: Vec<Prediction>) -> Result<Self, EvalError> {
        let first = predictions.first().ok_or_else(|| {
            EvalError::InvalidPredictions("prediction set is empty".into())
        })?;
        let classes = first.probs.len();
        for p in &predictions {
            if p.probs.len() != classes {
                return Err(EvalError::InvalidPredictions(format!(
                    "prediction {:?} has {} classes, expected {}",
                    p.id,
                    p.probs.len(),
                    classes
                )));
            }
            if p.true_label >= classes {
                return Err(EvalError::UnknownLabel {
                    id: p.id.clone(),
                    label: p.true_label,
                    classes,
                });
            }
        }
        Ok(PredictionSet { predictions })
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn classes(&self) -> usize {
        self.predictions[0].probs.len()
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

impl<'de> serde::Deserialize<'de> for PredictionSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let predictions = Vec::<Prediction>::deserialize(deserializer)?;
        PredictionSet::new(predictions).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(values: Vec<f64>) -> ProbVector {
        ProbVector::new(values).expect("valid probabilities")
    }

    #[test]
    fn construction_enforces_shared_class_count_and_label_range() {
        assert!(matches!(
            PredictionSet::new(Vec::new()),
            Err(EvalError::InvalidPredictions(_))
        ));

        let mixed = vec![
            Prediction {
                id: "a".into(),
                true_label: 0,
                probs: probs(vec![0.5, 0.5]),
            },
            Prediction {
                id: "b".into(),
                true_label: 0,
                probs: probs(vec![0.2, 0.3, 0.5]),
            },
        ];
        assert!(matches!(
            PredictionSet::new(mixed),
            Err(EvalError::InvalidPredictions(_))
        ));

        let out_of_range = vec![Prediction {
            id: "c".into(),
            true_label: 2,
            probs: probs(vec![0.5, 0.5]),
        }];
        assert_eq!(
            PredictionSet::new(out_of_range).err(),
            Some(EvalError::UnknownLabel {
                id: "c".into(),
                label: 2,
                classes: 2
            })
        );
    }

    #[test]
    fn serialization_roundtrips_and_rejects_invalid_payloads() {
        let set = PredictionSet::new(vec![
            Prediction {
                id: "a".into(),
                true_label: 1,
                probs: probs(vec![0.25, 0.75]),
            },
            Prediction {
                id: "b".into(),
                true_label: 0,
                probs: probs(vec![0.9, 0.1]),
            },
        ])
        .expect("build");
        let json = serde_json::to_string(&set).expect("serialize");
        let back: PredictionSet = serde_json::from_str(&json).expect("deserialize");
        assert_eq!(back, set, "roundtrip is lossless");

        let bad = r#"[{"id":"a","true_label":0,"probs":[0.9,0.3]}]"#;
        assert!(
            serde_json::from_str::<PredictionSet>(bad).is_err(),
            "probabilities summing to 1.2 must not deserialize"
        );
    }
}
