use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use mfr_core::ensemble::{ensemble_predict, make_folds, EnsembleMember, ProbVector};
use mfr_core::eval::{error_report, EvalReport, Prediction, PredictionSet};
use mfr_core::model::{build_from_config, fit, FitHistory, Model, ModelConfig};
use mfr_core::tensor::Tensor;

use crate::commands::train::fit_config;
use crate::config::{require_file, RunConfig, TrainingSection};
use crate::dataset::{check_shape, load_embedding_dataset, model_input_shape};
use crate::CliError;

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    /// Run configuration; reads the data, model, training, and ensemble
    /// sections. Member seeds are training.seed + member index.
    #[arg(long)]
    config: PathBuf,
    /// Run summary JSON output (report, vote accuracy, member stats).
    #[arg(long)]
    out: PathBuf,
    /// Averaged-probability prediction set output, consumable by `eval`.
    #[arg(long)]
    preds: Option<PathBuf>,
    /// Concurrent member trainings. Members are seeded independently, so
    /// results do not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Model name used in the report.
    #[arg(long, default_value = "Ensemble Learning")]
    name: String,
}

#[derive(Serialize)]
struct MemberSummary {
    name: String,
    train_examples: usize,
    val_examples: usize,
    best_val_accuracy: f64,
}

#[derive(Serialize)]
struct RunSummary {
    report: EvalReport,
    /// Accuracy of the voted decision; the report's top-1 scores the
    /// averaged distribution instead, which also defines top-5.
    vote_top1: f64,
    members: Vec<MemberSummary>,
}

struct MemberData {
    train_x: Vec<Tensor>,
    train_y: Vec<usize>,
    val_x: Vec<Tensor>,
    val_y: Vec<usize>,
}

fn train_member(
    model_config: &ModelConfig,
    training: &TrainingSection,
    member: usize,
    data: &MemberData,
) -> Result<(Model, FitHistory), CliError> {
    let seed = training.seed + member as u64;
    let mut model = build_from_config(model_config, seed)?;
    let history = fit(
        &mut model,
        &data.train_x,
        &data.train_y,
        &data.val_x,
        &data.val_y,
        &fit_config(training, seed),
    )?;
    Ok((model, history))
}

pub fn run(args: EnsembleArgs) -> Result<(), CliError> {
    require_file(&args.config)?;
    let config = RunConfig::load(&args.config)?;
    let data = config.data()?;
    let model_config = config.model()?;
    let training = config.training()?;
    let ensemble = config.ensemble()?;

    let pool_path = data.embeddings.as_ref().ok_or_else(|| {
        CliError::Invalid("ensemble training needs data.embeddings".into())
    })?;
    let eval_path = data.eval_embeddings.as_ref().ok_or_else(|| {
        CliError::Invalid("ensemble evaluation needs data.eval_embeddings".into())
    })?;
    require_file(pool_path)?;
    require_file(eval_path)?;

    let pool = load_embedding_dataset(pool_path)?;
    let mut eval_set = load_embedding_dataset(eval_path)?;
    eval_set.relabel(&pool.vocab)?;
    check_shape(&pool, &model_input_shape(model_config))?;
    check_shape(&eval_set, &model_input_shape(model_config))?;
    if pool.vocab.len() != model_config.num_classes() {
        return Err(CliError::Invalid(format!(
            "model expects {} classes but the pool has {}",
            model_config.num_classes(),
            pool.vocab.len()
        )));
    }

    let pool_manifest = pool.as_manifest()?;
    let folds =
        make_folds(&pool_manifest, ensemble.members, ensemble.val_fraction, ensemble.fold_seed)?;
    let by_id: HashMap<&str, usize> =
        pool.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let gather = |ids: &[String]| -> (Vec<Tensor>, Vec<usize>) {
        let idx: Vec<usize> = ids.iter().map(|id| by_id[id.as_str()]).collect();
        (
            idx.iter().map(|&i| pool.examples[i].clone()).collect(),
            idx.iter().map(|&i| pool.labels[i]).collect(),
        )
    };
    let member_data: Vec<MemberData> = folds
        .iter()
        .map(|fold| {
            let train_ids: Vec<String> =
                fold.train.records().iter().map(|r| r.id.clone()).collect();
            let val_ids: Vec<String> = fold.val.records().iter().map(|r| r.id.clone()).collect();
            let (train_x, train_y) = gather(&train_ids);
            let (val_x, val_y) = gather(&val_ids);
            MemberData { train_x, train_y, val_x, val_y }
        })
        .collect();

    // Members are independent, so training them in --jobs-sized waves cannot
    // change any result, only the wall clock.
    let jobs = args.jobs.max(1);
    let mut trained: Vec<Option<(Model, FitHistory)>> =
        (0..ensemble.members).map(|_| None).collect();
    let indices: Vec<usize> = (0..ensemble.members).collect();
    for wave in indices.chunks(jobs) {
        let results: Vec<Result<(Model, FitHistory), CliError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&m| {
                    let data = &member_data[m];
                    scope.spawn(move || train_member(model_config, training, m, data))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("member training panicked")).collect()
        });
        for (&m, result) in wave.iter().zip(results) {
            trained[m] = Some(result?);
        }
    }

    let mut members = Vec::with_capacity(ensemble.members);
    let mut summaries = Vec::with_capacity(ensemble.members);
    for (m, slot) in trained.into_iter().enumerate() {
        let (model, history) = slot.expect("every member trains");
        let name = format!("member-{m}");
        log::info!(
            "{name}: {} train / {} val, best val top-1 {:.4}",
            member_data[m].train_x.len(),
            member_data[m].val_x.len(),
            history.best_val_accuracy
        );
        summaries.push(MemberSummary {
            name: name.clone(),
            train_examples: member_data[m].train_x.len(),
            val_examples: member_data[m].val_x.len(),
            best_val_accuracy: history.best_val_accuracy,
        });
        members.push(EnsembleMember { name, model });
    }

    let mut vote_hits = 0usize;
    let mut predictions = Vec::with_capacity(eval_set.len());
    for i in 0..eval_set.len() {
        let inputs: Vec<Tensor> = vec![eval_set.examples[i].clone(); members.len()];
        let (winner, votes, _) = ensemble_predict(&members, &inputs)?;
        if winner == eval_set.labels[i] {
            vote_hits += 1;
        }
        let classes = votes[0].probs().len();
        let mut averaged = vec![0.0f64; classes];
        for vote in &votes {
            for (sum, p) in averaged.iter_mut().zip(vote.probs().values()) {
                *sum += p;
            }
        }
        for sum in averaged.iter_mut() {
            *sum /= votes.len() as f64;
        }
        predictions.push(Prediction {
            id: eval_set.ids[i].clone(),
            true_label: eval_set.labels[i],
            probs: ProbVector::new(averaged)?,
        });
    }
    let vote_top1 = vote_hits as f64 / eval_set.len() as f64;

    let prediction_set = PredictionSet::new(predictions)?;
    let report = error_report(&prediction_set, &pool_manifest, &args.name)?;
    log::info!(
        "{}: vote top-1 {:.4}, averaged top-1 {:.4} / top-5 {:.4} on {} examples",
        args.name,
        vote_top1,
        report.top1,
        report.top5,
        eval_set.len()
    );

    if let Some(path) = &args.preds {
        let text = serde_json::to_string_pretty(&prediction_set).expect("predictions serialize");
        fs::write(path, text).map_err(CliError::io(path))?;
        log::info!("predictions -> {}", path.display());
    }

    let summary = RunSummary { report, vote_top1, members: summaries };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&args.out, text).map_err(CliError::io(&args.out))?;
    log::info!("summary -> {}", args.out.display());
    Ok(())
}
