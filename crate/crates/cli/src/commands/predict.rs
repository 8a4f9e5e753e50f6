use std::fs;
use std::path::PathBuf;

use clap::Args;

use mfr_core::model::load_checkpoint;

use crate::config::require_file;
use crate::dataset::{check_shape, load_embedding_dataset, model_input_shape, predict_set};
use crate::CliError;

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Trained model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Embeddings CSV to predict over.
    #[arg(long)]
    embeddings: PathBuf,
    /// Class vocabulary JSON from training. Without it the file's own
    /// first-appearance label order is assumed to match the model's classes.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Prediction set JSON output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
}

pub fn run(args: PredictArgs) -> Result<(), CliError> {
    require_file(&args.checkpoint)?;
    require_file(&args.embeddings)?;

    let model = load_checkpoint(&args.checkpoint)?;
    let mut dataset = load_embedding_dataset(&args.embeddings)?;
    if let Some(path) = &args.vocab {
        require_file(path)?;
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let vocab: Vec<String> = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.clone(),
            message: e.to_string(),
        })?;
        dataset.relabel(&vocab)?;
    } else {
        log::warn!("no --vocab given; trusting the file's own label order");
    }

    check_shape(&dataset, &model_input_shape(&model.config))?;
    if dataset.vocab.len() != model.config.num_classes() {
        return Err(CliError::Invalid(format!(
            "model predicts {} classes but the dataset labels name {}",
            model.config.num_classes(),
            dataset.vocab.len()
        )));
    }

    let predictions = predict_set(&model, &dataset, args.batch_size)?;
    let text = serde_json::to_string_pretty(&predictions).expect("predictions serialize");
    fs::write(&args.out, text).map_err(CliError::io(&args.out))?;
    log::info!(
        "wrote {} predictions over {} classes -> {}",
        predictions.len(),
        predictions.classes(),
        args.out.display()
    );
    Ok(())
}
