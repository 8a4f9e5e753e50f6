//! `mfr`: command-line workbench for the masked face recognition pipeline.
//!
//! Every subcommand is deterministic: all randomness flows from explicit
//! `--seed` flags or config fields, logs go to standard error, and data
//! artifacts are written only to declared output paths. Exit codes: 0 on
//! success, 1 on usage errors, 2 on data or config errors.

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use mfr_core::data::DataError;
use mfr_core::ensemble::EnsembleError;
use mfr_core::eval::EvalError;
use mfr_core::model::{CheckpointError, ModelError};
use mfr_core::nn::NnError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

#[derive(Parser)]
#[command(
    name = "mfr",
    version,
    about = "Masked face recognition workbench: masking, training, ensembling, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Overlay the synthetic mask on every face in a manifest
    Mask(commands::mask::MaskArgs),
    /// Split a dataset manifest into train and validation manifests
    Split(commands::split::SplitArgs),
    /// Generate synthetic datasets (embeddings or images)
    #[command(subcommand)]
    Synth(commands::synth::SynthCommand),
    /// Fit one model from a run config and write a checkpoint
    Train(commands::train::TrainArgs),
    /// Run a checkpoint over a dataset and write predictions
    Predict(commands::predict::PredictArgs),
    /// Train a voting ensemble over folds and report its accuracy
    Ensemble(commands::ensemble::EnsembleArgs),
    /// Score prediction sets and render the results table
    Eval(commands::eval::EvalArgs),
    /// Verify every backward pass against finite differences
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Mask(args) => commands::mask::run(args),
        Command::Split(args) => commands::split::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Ensemble(args) => commands::ensemble::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.kind() == ErrorKind::DisplayHelp || e.kind() == ErrorKind::DisplayVersion => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
