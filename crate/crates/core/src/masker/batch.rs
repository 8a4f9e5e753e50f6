//! Applies the mask overlay across a whole dataset, tolerating bad records.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::{apply_mask, LandmarkSet, MaskError, MaskTemplate};

/// One image to mask: where to read the face and its landmark sidecar, and
/// where to write the result.
#[derive(Debug, Clone)]
pub struct MaskJob {
    pub id: String,
    pub image: PathBuf,
    pub landmarks: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskFailure {
    pub id: String,
    pub reason: String,
}

/// Outcome of a batch run; `succeeded` and `failed` together preserve the
/// input job order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskBatchReport {
    pub succeeded: Vec<String>,
    pub failed: Vec<MaskFailure>,
}

/// Reads a landmark sidecar JSON file.
pub fn load_landmarks(path: &Path) -> Result<LandmarkSet, MaskError> {
    let text = fs::read_to_string(path).map_err(|source| MaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lm: LandmarkSet = serde_json::from_str(&text).map_err(|e| MaskError::BadLandmarks {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    lm.validate()?;
    Ok(lm)
}

fn load_rgb(path: &Path) -> Result<RgbImage, MaskError> {
    let img = image::open(path).map_err(|source| MaskError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

fn run_job(job: &MaskJob, template: &MaskTemplate) -> Result<(), MaskError> {
    let face = load_rgb(&job.image)?;
    let landmarks = load_landmarks(&job.landmarks)?;
    let masked = apply_mask(&face, &landmarks, template)?;
    if let Some(parent) = job.output.parent() {
        fs::create_dir_all(parent).map_err(|source| MaskError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    masked.save(&job.output).map_err(|source| MaskError::Image {
        path: job.output.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Masks every job in order. A failing record is reported and skipped; it
/// never aborts the rest of the batch.
pub fn mask_batch(jobs: &[MaskJob], template: &MaskTemplate) -> MaskBatchReport {
    let mut report = MaskBatchReport::default();
    for job in jobs {
        match run_job(job, template) {
            Ok(()) => report.succeeded.push(job.id.clone()),
            Err(e) => report.failed.push(MaskFailure {
                id: job.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    report
}
