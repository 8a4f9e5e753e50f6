//! The JSON run configuration consumed by `train` and `ensemble`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use mfr_core::data::SplitSpec;
use mfr_core::model::ModelConfig;

use crate::CliError;

/// Top-level run configuration. Sections are optional; each subcommand
/// documents which ones it reads. Unknown keys anywhere are rejected so a
/// typo fails loudly instead of silently falling back to a default.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataSection>,
    pub model: Option<ModelConfig>,
    pub training: Option<TrainingSection>,
    pub ensemble: Option<EnsembleSection>,
    pub masker: Option<MaskerSection>,
    pub eval: Option<EvalSection>,
}

/// Where examples come from. `embeddings` or `manifest` is the training
/// source; `eval_embeddings` is the held-out set used for evaluation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub embeddings: Option<PathBuf>,
    pub eval_embeddings: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// Directory the manifest's `source` paths resolve against; defaults to
    /// the manifest's own directory.
    pub image_root: Option<PathBuf>,
    pub split: Option<SplitSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: Option<usize>,
    /// Required: every run names its randomness explicitly.
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub members: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    pub fold_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskerSection {
    /// Template name: "surgical" or "transparent".
    pub template: String,
    pub landmarks_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Cutoffs whose top-k accuracy is logged per model.
    #[serde(default = "default_ks")]
    pub k: Vec<usize>,
    /// Fallback for `--out` when the flag is not given.
    pub output: Option<PathBuf>,
}

fn default_ks() -> Vec<usize> {
    vec![1, 5]
}

fn default_lr() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    32
}
fn default_epochs() -> usize {
    50
}
fn default_val_fraction() -> f64 {
    0.1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn data(&self) -> Result<&DataSection, CliError> {
        self.data.as_ref().ok_or_else(|| missing("data"))
    }

    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model.as_ref().ok_or_else(|| missing("model"))
    }

    pub fn training(&self) -> Result<&TrainingSection, CliError> {
        self.training.as_ref().ok_or_else(|| missing("training"))
    }

    pub fn ensemble(&self) -> Result<&EnsembleSection, CliError> {
        self.ensemble.as_ref().ok_or_else(|| missing("ensemble"))
    }
}

fn missing(section: &str) -> CliError {
    CliError::Invalid(format!("config is missing the \"{section}\" section"))
}

/// Fails fast, naming the path, when a file the run will read is absent.
pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{}: no such file", path.display())))
    }
}

pub fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{}: no such directory", path.display())))
    }
}
