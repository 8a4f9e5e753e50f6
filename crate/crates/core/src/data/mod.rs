//! Dataset plumbing: manifests, deterministic splits, augmentation, and
//! embedding files, plus synthetic data for self-contained experiments.

mod augment;
mod embeddings;
mod manifest;
mod split;
mod synth;

pub use augment::{augment_image, hflip_image, zoom_image, AugmentationSpec};
pub use embeddings::{
    embedding_examples, load_embeddings, save_embeddings, synth_embeddings, EmbeddingRecord,
};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, SampleRecord};
pub use split::{id_digest, split_dataset, split_indices, SplitSpec};
pub use synth::synth_images;

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line} of {path}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("duplicate id {id:?} at line {line} of {path}")]
    DuplicateId { path: PathBuf, id: String, line: u64 },
    #[error("non-finite value for record {id:?} at line {line} of {path}")]
    NonFinite { path: PathBuf, id: String, line: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Fraction of distinct labels that occur exactly once.
///
/// Face datasets are dominated by subjects with a single photo, and this ratio
/// is what error reports cite when relating mistakes to training coverage.
pub fn single_record_label_fraction<T: std::hash::Hash + Eq>(labels: &[T]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    let singles = counts.values().filter(|&&c| c == 1).count();
    singles as f64 / counts.len() as f64
}
