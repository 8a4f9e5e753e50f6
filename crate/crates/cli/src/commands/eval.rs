use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use mfr_core::data::{load_manifest, DatasetManifest};
use mfr_core::eval::{error_report, topk_accuracy, PredictionSet, ResultsRow, ResultsTable};

use crate::config::{require_file, RunConfig};
use crate::dataset::load_embedding_dataset;
use crate::CliError;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Prediction set JSON files, one per table row.
    #[arg(long, num_args = 1.., required = true)]
    preds: Vec<PathBuf>,
    /// Row names matching --preds in order [default: the file stems].
    #[arg(long, num_args = 1..)]
    names: Vec<String>,
    /// Training manifest, for the rare-class error analysis.
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    /// Training embeddings CSV, alternative to --train-manifest.
    #[arg(long)]
    train_embeddings: Option<PathBuf>,
    /// Results table JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one full report JSON per row.
    #[arg(long)]
    reports_dir: Option<PathBuf>,
    /// Optional run configuration; reads the eval section (extra top-k
    /// cutoffs to log, fallback output path).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_predictions(path: &Path) -> Result<PredictionSet, CliError> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn stem_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string()
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let run_config = match &args.config {
        Some(path) => {
            require_file(path)?;
            Some(RunConfig::load(path)?)
        }
        None => None,
    };
    let eval_section = run_config.as_ref().and_then(|c| c.eval.as_ref());

    let names: Vec<String> = if args.names.is_empty() {
        args.preds.iter().map(|p| stem_name(p)).collect()
    } else if args.names.len() == args.preds.len() {
        args.names.clone()
    } else {
        return Err(CliError::Invalid(format!(
            "{} names for {} prediction files",
            args.names.len(),
            args.preds.len()
        )));
    };

    let train: DatasetManifest = match (&args.train_manifest, &args.train_embeddings) {
        (Some(_), Some(_)) => {
            return Err(CliError::Invalid(
                "pass --train-manifest or --train-embeddings, not both".into(),
            ))
        }
        (Some(path), None) => {
            require_file(path)?;
            load_manifest(path)?
        }
        (None, Some(path)) => {
            require_file(path)?;
            load_embedding_dataset(path)?.as_manifest()?
        }
        (None, None) => {
            return Err(CliError::Invalid(
                "the error analysis needs --train-manifest or --train-embeddings".into(),
            ))
        }
    };

    if let Some(dir) = &args.reports_dir {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }

    let extra_ks: &[usize] = eval_section.map_or(&[], |s| s.k.as_slice());
    let mut rows = Vec::with_capacity(args.preds.len());
    for (path, name) in args.preds.iter().zip(&names) {
        let predictions = load_predictions(path)?;
        let report = error_report(&predictions, &train, name)?;
        for &k in extra_ks {
            log::info!("{name}: top-{k} {:.4}", topk_accuracy(&predictions, k)?);
        }
        if let Some(dir) = &args.reports_dir {
            let out = dir.join(format!("{name}.json"));
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            fs::write(&out, text).map_err(CliError::io(&out))?;
            log::info!("{name}: report -> {}", out.display());
        }
        rows.push(ResultsRow::from(&report));
    }

    let table = ResultsTable { rows };
    println!("{}", table.render_text());

    let out = args.out.clone().or_else(|| eval_section.and_then(|s| s.output.clone()));
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&table).expect("table serializes");
        fs::write(&path, text).map_err(CliError::io(&path))?;
        log::info!("table -> {}", path.display());
    }
    Ok(())
}
