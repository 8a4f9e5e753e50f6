use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use mfr_core::data::{load_manifest, split_indices};
use mfr_core::model::{build_from_config, fit, save_checkpoint, FitConfig, ModelConfig};
use mfr_core::nn::AdamParams;
use mfr_core::tensor::Tensor;

use crate::config::{require_file, DataSection, RunConfig, TrainingSection};
use crate::dataset::{
    check_shape, load_embedding_dataset, load_image_dataset, model_input_shape, LoadedDataset,
};
use crate::CliError;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run configuration; reads the data, model, and training sections.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional training history JSON output.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Optional class vocabulary JSON output (names in index order).
    #[arg(long)]
    vocab: Option<PathBuf>,
}

/// Loads whichever training source the data section names.
pub fn load_training_source(
    data: &DataSection,
    model: &ModelConfig,
) -> Result<LoadedDataset, CliError> {
    match (&data.embeddings, &data.manifest) {
        (Some(_), Some(_)) => Err(CliError::Invalid(
            "data section names both embeddings and an image manifest; pick one".into(),
        )),
        (Some(path), None) => {
            require_file(path)?;
            load_embedding_dataset(path)
        }
        (None, Some(path)) => {
            require_file(path)?;
            let channels = match model {
                ModelConfig::Vit(c) => c.channels,
                ModelConfig::HeadClassifier(_) => {
                    return Err(CliError::Invalid(
                        "the head classifier trains on embeddings, not an image manifest".into(),
                    ))
                }
            };
            let manifest = load_manifest(path)?;
            let root = data
                .image_root
                .clone()
                .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
            load_image_dataset(&manifest, &root, channels)
        }
        (None, None) => Err(CliError::Invalid(
            "data section names neither embeddings nor an image manifest".into(),
        )),
    }
}

pub fn fit_config(training: &TrainingSection, seed: u64) -> FitConfig {
    FitConfig {
        epochs: training.epochs,
        batch_size: training.batch_size,
        adam: AdamParams { lr: training.lr, ..AdamParams::default() },
        patience: training.patience,
        seed,
    }
}

fn gather(dataset: &LoadedDataset, idx: &[usize]) -> (Vec<Tensor>, Vec<usize>) {
    (
        idx.iter().map(|&i| dataset.examples[i].clone()).collect(),
        idx.iter().map(|&i| dataset.labels[i]).collect(),
    )
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    require_file(&args.config)?;
    let config = RunConfig::load(&args.config)?;
    let data = config.data()?;
    let model_config = config.model()?;
    let training = config.training()?;

    let dataset = load_training_source(data, model_config)?;
    check_shape(&dataset, &model_input_shape(model_config))?;
    if dataset.vocab.len() != model_config.num_classes() {
        return Err(CliError::Invalid(format!(
            "model expects {} classes but the dataset has {}",
            model_config.num_classes(),
            dataset.vocab.len()
        )));
    }

    let (train_xy, val_xy) = match &data.split {
        Some(spec) => {
            let (train_idx, val_idx) = split_indices(dataset.len(), *spec)?;
            (gather(&dataset, &train_idx), gather(&dataset, &val_idx))
        }
        None => {
            log::info!("no split in the data section; validating on the training set");
            let all: Vec<usize> = (0..dataset.len()).collect();
            (gather(&dataset, &all), gather(&dataset, &all))
        }
    };

    let mut model = build_from_config(model_config, training.seed)?;
    let history = fit(
        &mut model,
        &train_xy.0,
        &train_xy.1,
        &val_xy.0,
        &val_xy.1,
        &fit_config(training, training.seed),
    )?;

    save_checkpoint(&model, &args.out)?;
    log::info!(
        "trained {} epochs on {} examples; best epoch {} at val top-1 {:.4}",
        history.epochs.len(),
        train_xy.0.len(),
        history.best_epoch,
        history.best_val_accuracy
    );
    log::info!("checkpoint -> {}", args.out.display());

    if let Some(path) = &args.history {
        let text = serde_json::to_string_pretty(&history).expect("history serializes");
        fs::write(path, text).map_err(CliError::io(path))?;
        log::info!("history -> {}", path.display());
    }
    if let Some(path) = &args.vocab {
        let text = serde_json::to_string_pretty(&dataset.vocab).expect("vocab serializes");
        fs::write(path, text).map_err(CliError::io(path))?;
        log::info!("vocab -> {}", path.display());
    }
    Ok(())
}
