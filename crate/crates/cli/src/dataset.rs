//! Turns stored datasets into the example tensors models consume.

use std::collections::HashMap;
use std::path::Path;

use mfr_core::data::{load_embeddings, DatasetManifest, SampleRecord};
use mfr_core::ensemble::ProbVector;
use mfr_core::eval::{Prediction, PredictionSet};
use mfr_core::model::{stack_examples, Model, ModelConfig};
use mfr_core::nn::softmax_rows;
use mfr_core::tensor::Tensor;

use crate::CliError;

/// A dataset in memory: one tensor per example, labels as indices into
/// `vocab`, original label names kept for re-mapping against a different
/// vocabulary.
pub struct LoadedDataset {
    pub ids: Vec<String>,
    pub examples: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub vocab: Vec<String>,
}

impl LoadedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    /// Replaces the first-appearance labeling with indices into `vocab`,
    /// typically the vocabulary the model was trained with.
    pub fn relabel(&mut self, vocab: &[String]) -> Result<(), CliError> {
        let index: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let mut labels = Vec::with_capacity(self.label_names.len());
        for (id, name) in self.ids.iter().zip(&self.label_names) {
            let Some(&i) = index.get(name.as_str()) else {
                return Err(CliError::Invalid(format!(
                    "record {id}: label \"{name}\" is not in the training vocabulary"
                )));
            };
            labels.push(i);
        }
        self.labels = labels;
        self.vocab = vocab.to_vec();
        Ok(())
    }

    /// A manifest mirroring this dataset, for code paths that operate on
    /// manifests (folds, error reports).
    pub fn as_manifest(&self) -> Result<DatasetManifest, CliError> {
        let records = self
            .ids
            .iter()
            .zip(&self.label_names)
            .map(|(id, label)| SampleRecord {
                id: id.clone(),
                source: "embeddings".into(),
                label: label.clone(),
                masked: false,
            })
            .collect();
        Ok(DatasetManifest::from_records(records)?)
    }
}

/// Loads an embeddings CSV as `[dim]` tensors with first-appearance labels.
pub fn load_embedding_dataset(path: &Path) -> Result<LoadedDataset, CliError> {
    let records = load_embeddings(path)?;
    let mut vocab: Vec<String> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut ids = Vec::with_capacity(records.len());
    let mut examples = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut label_names = Vec::with_capacity(records.len());

    let dim = records.first().map_or(0, |r| r.vector.len());
    for r in records {
        if r.vector.len() != dim {
            return Err(CliError::Invalid(format!(
                "record {}: dimension {} differs from {}",
                r.id,
                r.vector.len(),
                dim
            )));
        }
        let next = vocab.len();
        let index = *by_name.entry(r.label.clone()).or_insert_with(|| {
            vocab.push(r.label.clone());
            next
        });
        ids.push(r.id);
        label_names.push(r.label);
        labels.push(index);
        examples.push(Tensor::new(vec![dim], r.vector));
    }
    Ok(LoadedDataset { ids, examples, labels, label_names, vocab })
}

/// Reads every manifest image as `[h, w, c]` with pixels scaled to [0, 1].
pub fn load_image_dataset(
    manifest: &DatasetManifest,
    root: &Path,
    channels: usize,
) -> Result<LoadedDataset, CliError> {
    let mut examples = Vec::with_capacity(manifest.len());
    for r in manifest.records() {
        let path = root.join(&r.source);
        let img = image::open(&path)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let (raw, h, w) = match channels {
            1 => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                (g.into_raw(), h as usize, w as usize)
            }
            3 => {
                let rgb = img.to_rgb8();
                let (w, h) = rgb.dimensions();
                (rgb.into_raw(), h as usize, w as usize)
            }
            other => {
                return Err(CliError::Invalid(format!(
                    "images load as 1 or 3 channels, model wants {other}"
                )))
            }
        };
        let data = raw.iter().map(|&v| v as f64 / 255.0).collect();
        examples.push(Tensor::new(vec![h, w, channels], data));
    }
    Ok(LoadedDataset {
        ids: manifest.records().iter().map(|r| r.id.clone()).collect(),
        examples,
        labels: manifest.label_indices(),
        label_names: manifest.records().iter().map(|r| r.label.clone()).collect(),
        vocab: manifest.vocab().to_vec(),
    })
}

/// Runs the model over the dataset in batches and packages the softmax
/// outputs as a prediction set.
pub fn predict_set(
    model: &Model,
    dataset: &LoadedDataset,
    batch_size: usize,
) -> Result<PredictionSet, CliError> {
    if batch_size == 0 {
        return Err(CliError::Invalid("batch size must be at least 1".into()));
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut start = 0;
    while start < dataset.len() {
        let end = (start + batch_size).min(dataset.len());
        let batch = stack_examples(&dataset.examples[start..end])?;
        let logits = model.forward_eval(&batch)?;
        let probs = softmax_rows(&logits);
        let classes = probs.shape()[1];
        for (offset, i) in (start..end).enumerate() {
            let row = probs.data()[offset * classes..(offset + 1) * classes].to_vec();
            predictions.push(Prediction {
                id: dataset.ids[i].clone(),
                true_label: dataset.labels[i],
                probs: ProbVector::new(row)?,
            });
        }
        start = end;
    }
    Ok(PredictionSet::new(predictions)?)
}

/// The per-example tensor shape a model config implies.
pub fn model_input_shape(config: &ModelConfig) -> Vec<usize> {
    match config {
        ModelConfig::HeadClassifier(c) => vec![c.input_dim],
        ModelConfig::Vit(c) => vec![c.image_size, c.image_size, c.channels],
    }
}

/// Checks that the dataset's example shape is what the model was built for.
pub fn check_shape(dataset: &LoadedDataset, expected: &[usize]) -> Result<(), CliError> {
    let Some(first) = dataset.examples.first() else {
        return Err(CliError::Invalid("dataset has no examples".into()));
    };
    if first.shape() != expected {
        return Err(CliError::Invalid(format!(
            "example shape {:?} does not match the model's expected {:?}",
            first.shape(),
            expected
        )));
    }
    Ok(())
}
