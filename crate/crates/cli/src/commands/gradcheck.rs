use std::fs;
use std::path::PathBuf;

use clap::Args;

use mfr_core::nn::run_gradient_suite;

use crate::CliError;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random inputs checked per operation.
    #[arg(long, default_value_t = 10)]
    cases: usize,
    /// Central difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Maximum tolerated relative error.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Machine-readable report output.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn run(args: GradcheckArgs) -> Result<(), CliError> {
    if args.cases == 0 {
        return Err(CliError::Invalid("cases must be at least 1".into()));
    }
    let reports = run_gradient_suite(args.cases, args.step, args.threshold, args.seed);
    for r in &reports {
        println!(
            "{:<16} max_rel {:>10.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        fs::write(path, text).map_err(CliError::io(path))?;
        log::info!("report -> {}", path.display());
    }

    let failed: Vec<&str> =
        reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        log::info!("{} operations passed at threshold {:.1e}", reports.len(), args.threshold);
        Ok(())
    } else {
        Err(CliError::Invalid(format!("gradient check failed for: {}", failed.join(", "))))
    }
}
