use std::fs;
use std::path::PathBuf;

use clap::{Args, Subcommand};

use mfr_core::data::{
    save_embeddings, save_manifest, synth_embeddings, synth_images, DatasetManifest, SampleRecord,
};
use mfr_core::rng::RngState;
use mfr_core::tensor::Tensor;

use crate::CliError;

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Well-separated Gaussian class clusters written as an embeddings CSV
    Embeddings(EmbeddingsArgs),
    /// Per-class sinusoid pattern images written as PNGs plus a manifest
    Images(ImagesArgs),
}

#[derive(Args, Debug)]
pub struct EmbeddingsArgs {
    #[arg(long, default_value_t = 20)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Distance of each class mean from the origin.
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    /// Standard deviation of the per-sample jitter.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    /// Embeddings CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ImagesArgs {
    /// Number of classes; the frequency grid separates 2 through 9.
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// 1 for grayscale PNGs, 3 for RGB.
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Standard deviation of the per-pixel jitter.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    /// Directory the PNGs are written into.
    #[arg(long)]
    out_dir: PathBuf,
    /// Manifest output [default: <out-dir>/manifest.csv].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

pub fn run(command: SynthCommand) -> Result<(), CliError> {
    match command {
        SynthCommand::Embeddings(args) => embeddings(args),
        SynthCommand::Images(args) => images(args),
    }
}

fn embeddings(args: EmbeddingsArgs) -> Result<(), CliError> {
    if args.classes < 2 {
        return Err(CliError::Invalid(format!("need at least 2 classes, got {}", args.classes)));
    }
    if args.per_class == 0 || args.dim == 0 {
        return Err(CliError::Invalid("per-class and dim must be at least 1".into()));
    }
    if !(args.separation > 0.0) || !(args.noise >= 0.0) {
        return Err(CliError::Invalid(
            "separation must be positive and noise non-negative".into(),
        ));
    }

    let mut rng = RngState::with_counter(args.seed, 0);
    let records =
        synth_embeddings(args.classes, args.per_class, args.dim, args.separation, args.noise, &mut rng);
    save_embeddings(&records, &args.out)?;
    log::info!(
        "wrote {} embeddings ({} classes x {}, dim {}) -> {}",
        records.len(),
        args.classes,
        args.per_class,
        args.dim,
        args.out.display()
    );
    Ok(())
}

/// Maps a unit-range pixel to a byte; synthetic noise can overshoot the
/// pattern range, so values clamp instead of wrapping.
fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save_png(image: &Tensor, channels: usize, path: &PathBuf) -> Result<(), CliError> {
    let (h, w) = (image.shape()[0] as u32, image.shape()[1] as u32);
    let bytes: Vec<u8> = image.data().iter().map(|&v| to_byte(v)).collect();
    let result = match channels {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("buffer length matches dimensions")
            .save(path),
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("buffer length matches dimensions")
            .save(path),
        other => {
            return Err(CliError::Invalid(format!("PNG output supports 1 or 3 channels, got {other}")))
        }
    };
    result.map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn images(args: ImagesArgs) -> Result<(), CliError> {
    if !(2..=9).contains(&args.classes) {
        return Err(CliError::Invalid(format!(
            "the frequency grid separates 2 through 9 classes, got {}",
            args.classes
        )));
    }
    if args.per_class == 0 || args.size == 0 {
        return Err(CliError::Invalid("per-class and size must be at least 1".into()));
    }
    if !(args.channels == 1 || args.channels == 3) {
        return Err(CliError::Invalid(format!(
            "PNG output supports 1 or 3 channels, got {}",
            args.channels
        )));
    }
    if !(args.noise >= 0.0) {
        return Err(CliError::Invalid("noise must be non-negative".into()));
    }

    let mut rng = RngState::with_counter(args.seed, 0);
    let (images, labels) = synth_images(
        args.classes,
        args.per_class,
        args.size,
        args.channels,
        args.noise,
        &mut rng,
    );

    fs::create_dir_all(&args.out_dir).map_err(CliError::io(&args.out_dir))?;
    let mut records = Vec::with_capacity(images.len());
    for (i, (image, &label)) in images.iter().zip(&labels).enumerate() {
        let id = format!("c{label:02}_s{:03}", i % args.per_class);
        let file = format!("{id}.png");
        save_png(image, args.channels, &args.out_dir.join(&file))?;
        records.push(SampleRecord {
            id,
            source: file,
            label: format!("c{label:02}"),
            masked: false,
        });
    }

    let manifest_path = args.manifest.unwrap_or_else(|| args.out_dir.join("manifest.csv"));
    let manifest = DatasetManifest::from_records(records)?;
    save_manifest(&manifest, &manifest_path)?;
    log::info!(
        "wrote {} images ({} classes x {}, {}x{}x{}) -> {}",
        manifest.len(),
        args.classes,
        args.per_class,
        args.size,
        args.size,
        args.channels,
        args.out_dir.display()
    );
    log::info!("manifest -> {}", manifest_path.display());
    Ok(())
}
