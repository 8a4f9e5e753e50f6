use std::path::{Path, PathBuf};

use clap::Args;

use mfr_core::data::{load_manifest, save_manifest, split_dataset, SplitSpec};

use crate::config::require_file;
use crate::CliError;

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Dataset manifest CSV to split.
    #[arg(long)]
    manifest: PathBuf,
    /// Fraction of records on the train side; the count is floored.
    #[arg(long, default_value_t = 0.95)]
    fraction: f64,
    /// Seed for the shuffling permutation.
    #[arg(long, default_value_t = 777)]
    seed: u64,
    /// Train manifest output [default: <manifest stem>.train.csv].
    #[arg(long)]
    out_train: Option<PathBuf>,
    /// Validation manifest output [default: <manifest stem>.val.csv].
    #[arg(long)]
    out_val: Option<PathBuf>,
}

fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("split");
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

pub fn run(args: SplitArgs) -> Result<(), CliError> {
    require_file(&args.manifest)?;
    let manifest = load_manifest(&args.manifest)?;
    let spec = SplitSpec { train_fraction: args.fraction, seed: args.seed };
    let (train, val) = split_dataset(&manifest, spec)?;

    let out_train = args.out_train.unwrap_or_else(|| suffixed(&args.manifest, "train"));
    let out_val = args.out_val.unwrap_or_else(|| suffixed(&args.manifest, "val"));
    save_manifest(&train, &out_train)?;
    save_manifest(&val, &out_val)?;

    log::info!(
        "split {} records into {} train / {} val (fraction {}, seed {})",
        manifest.len(),
        train.len(),
        val.len(),
        args.fraction,
        args.seed
    );
    log::info!("train -> {}", out_train.display());
    log::info!("val -> {}", out_val.display());
    Ok(())
}
