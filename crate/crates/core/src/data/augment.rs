//! Image augmentation: pixel rescaling, random horizontal flips, and random
//! center zooms.

use crate::rng::RngState;
use crate::tensor::Tensor;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentationSpec {
    /// Probability of mirroring the image left-right.
    pub hflip_prob: f64,
    /// Zoom factors are drawn uniformly from [1 - zoom_range, 1 + zoom_range].
    pub zoom_range: f64,
    /// Constant multiplier applied to every channel value.
    pub pixel_rescale: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            hflip_prob: 0.5,
            zoom_range: 0.2,
            pixel_rescale: 1.0 / 255.0,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.hflip_prob >= 0.0 && self.hflip_prob <= 1.0) {
            return Err(DataError::InvalidConfig(format!(
                "hflip_prob must be in [0, 1], got {}",
                self.hflip_prob
            )));
        }
        if !(self.zoom_range > -1.0) || !self.zoom_range.is_finite() {
            return Err(DataError::InvalidConfig(format!(
                "zoom_range must be a finite value > -1, got {}",
                self.zoom_range
            )));
        }
        if !self.pixel_rescale.is_finite() {
            return Err(DataError::InvalidConfig(format!(
                "pixel_rescale must be finite, got {}",
                self.pixel_rescale
            )));
        }
        Ok(())
    }
}

fn dims3(image: &Tensor) -> Result<(usize, usize, usize), DataError> {
    match image.shape() {
        [h, w, c] => Ok((*h, *w, *c)),
        other => Err(DataError::InvalidConfig(format!(
            "expected a [height, width, channels] image, got shape {other:?}"
        ))),
    }
}

/// Mirrors the image across its vertical axis.
pub fn hflip_image(image: &Tensor) -> Result<Tensor, DataError> {
    let (h, w, c) = dims3(image)?;
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let from = (y * w + x) * c;
            let to = (y * w + (w - 1 - x)) * c;
            out[to..to + c].copy_from_slice(&src[from..from + c]);
        }
    }
    Ok(Tensor::new(vec![h, w, c], out))
}

/// Resamples around the image center by `factor`, keeping the original size.
///
/// Factors above 1 magnify the center; factors below 1 shrink the content and
/// zero-pad the border. Sampling is bilinear, and at integer source
/// coordinates (factor 1 in particular) it reproduces values exactly.
pub fn zoom_image(image: &Tensor, factor: f64) -> Result<Tensor, DataError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(DataError::InvalidConfig(format!(
            "zoom factor must be a finite positive value, got {factor}"
        )));
    }
    let (h, w, c) = dims3(image)?;
    let src = image.data();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        let sy = cy + (y as f64 - cy) / factor;
        let y0 = libm::floor(sy) as i64;
        let fy = sy - y0 as f64;
        for x in 0..w {
            let sx = cx + (x as f64 - cx) / factor;
            let x0 = libm::floor(sx) as i64;
            let fx = sx - x0 as f64;
            // (corner dy, corner dx, weight); zero weights are skipped so
            // out-of-range corners never contribute.
            let corners = [
                (0, 0, (1.0 - fy) * (1.0 - fx)),
                (0, 1, (1.0 - fy) * fx),
                (1, 0, fy * (1.0 - fx)),
                (1, 1, fy * fx),
            ];
            for ch in 0..c {
                let mut acc = 0.0;
                for &(dy, dx, weight) in &corners {
                    if weight == 0.0 {
                        continue;
                    }
                    let yy = y0 + dy;
                    let xx = x0 + dx;
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                        continue;
                    }
                    acc += weight * src[((yy as usize) * w + xx as usize) * c + ch];
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    Ok(Tensor::new(vec![h, w, c], out))
}

/// Applies rescale, then a random flip, then a random zoom.
///
/// Both random draws are always consumed, so the rng stream position after a
/// call does not depend on the outcomes.
pub fn augment_image(
    image: &Tensor,
    spec: &AugmentationSpec,
    rng: &mut RngState,
) -> Result<Tensor, DataError> {
    spec.validate()?;
    dims3(image)?;
    let mut work = image.map(|v| v * spec.pixel_rescale);
    let flip = rng.next_bool(spec.hflip_prob);
    let factor = rng.uniform(1.0 - spec.zoom_range, 1.0 + spec.zoom_range);
    if flip {
        work = hflip_image(&work)?;
    }
    zoom_image(&work, factor)
}
