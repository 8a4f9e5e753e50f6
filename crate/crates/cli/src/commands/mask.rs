use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use mfr_core::data::{load_manifest, save_manifest, DatasetManifest, SampleRecord};
use mfr_core::masker::{mask_batch, MaskJob, MaskTemplate};

use crate::config::{require_dir, require_file, RunConfig};
use crate::CliError;

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Manifest of faces to mask. May come from the config's data section.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory face `source` paths resolve against [default: the
    /// manifest's directory].
    #[arg(long)]
    image_root: Option<PathBuf>,
    /// Directory holding `<id>.json` landmark sidecars. May come from the
    /// config's masker section.
    #[arg(long)]
    landmarks_dir: Option<PathBuf>,
    /// Directory masked PNGs are written into.
    #[arg(long)]
    out_dir: PathBuf,
    /// Template name: surgical or transparent. May come from the config's
    /// masker section [default: surgical].
    #[arg(long)]
    template: Option<String>,
    /// Manifest of successfully masked images [default: <out-dir>/manifest.csv].
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    /// Optional run configuration; reads the data and masker sections as
    /// fallbacks for the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn template_by_name(name: &str) -> Result<MaskTemplate, CliError> {
    match name {
        "surgical" => Ok(MaskTemplate::surgical()),
        "transparent" => Ok(MaskTemplate::transparent()),
        other => Err(CliError::Invalid(format!(
            "unknown template \"{other}\"; expected surgical or transparent"
        ))),
    }
}

pub fn run(args: MaskArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => {
            require_file(path)?;
            Some(RunConfig::load(path)?)
        }
        None => None,
    };
    let data_section = config.as_ref().and_then(|c| c.data.as_ref());
    let masker_section = config.as_ref().and_then(|c| c.masker.as_ref());

    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| data_section.and_then(|d| d.manifest.clone()))
        .ok_or_else(|| CliError::Invalid("no manifest given (flag or config data section)".into()))?;
    let landmarks_dir = args
        .landmarks_dir
        .clone()
        .or_else(|| masker_section.map(|m| m.landmarks_dir.clone()))
        .ok_or_else(|| {
            CliError::Invalid("no landmarks dir given (flag or config masker section)".into())
        })?;
    let template_name = args
        .template
        .clone()
        .or_else(|| masker_section.map(|m| m.template.clone()))
        .unwrap_or_else(|| "surgical".into());
    let template = template_by_name(&template_name)?;

    require_file(&manifest_path)?;
    require_dir(&landmarks_dir)?;
    let manifest = load_manifest(&manifest_path)?;
    let root = args
        .image_root
        .clone()
        .or_else(|| data_section.and_then(|d| d.image_root.clone()))
        .unwrap_or_else(|| manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf());

    fs::create_dir_all(&args.out_dir).map_err(CliError::io(&args.out_dir))?;
    let jobs: Vec<MaskJob> = manifest
        .records()
        .iter()
        .map(|r| MaskJob {
            id: r.id.clone(),
            image: root.join(&r.source),
            landmarks: landmarks_dir.join(format!("{}.json", r.id)),
            output: args.out_dir.join(format!("{}.png", r.id)),
        })
        .collect();

    let report = mask_batch(&jobs, &template);
    for failure in &report.failed {
        log::warn!("{}: {}", failure.id, failure.reason);
    }
    log::info!(
        "masked {}/{} images with the {} template -> {}",
        report.succeeded.len(),
        jobs.len(),
        template_name,
        args.out_dir.display()
    );

    if !report.succeeded.is_empty() {
        let masked: Vec<SampleRecord> = manifest
            .records()
            .iter()
            .filter(|r| report.succeeded.contains(&r.id))
            .map(|r| SampleRecord {
                id: r.id.clone(),
                source: format!("{}.png", r.id),
                label: r.label.clone(),
                masked: true,
            })
            .collect();
        let out_manifest =
            args.out_manifest.clone().unwrap_or_else(|| args.out_dir.join("manifest.csv"));
        save_manifest(&DatasetManifest::from_records(masked)?, &out_manifest)?;
        log::info!("manifest -> {}", out_manifest.display());
    }

    if report.failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "{} of {} images failed; see the warnings above",
            report.failed.len(),
            jobs.len()
        )))
    }
}
