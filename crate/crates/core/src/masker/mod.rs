//! Synthetic mask overlay: facial landmarks, a procedural mask template, and
//! the piecewise-affine warp that drapes the template over a face image.

mod batch;
mod warp;

pub use batch::{mask_batch, MaskBatchReport, MaskFailure, MaskJob};
pub use warp::{apply_mask, solve_affine, AffineMap, AffinePair};

use std::path::PathBuf;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngState;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("landmark triangle {which} is degenerate (area {area:.3e})")]
    DegenerateTriangle { which: &'static str, area: f64 },
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad landmark file {path}: {reason}")]
    BadLandmarks { path: PathBuf, reason: String },
    #[error("image error for {path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
}

/// The six face points the warp is anchored to, in image coordinates.
///
/// The left triangle is (left_jaw, left_cheek, nose_bridge_left); the right
/// triangle is (nose_bridge_right, right_cheek, right_jaw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSet {
    pub left_jaw: [f64; 2],
    pub left_cheek: [f64; 2],
    pub nose_bridge_left: [f64; 2],
    pub nose_bridge_right: [f64; 2],
    pub right_cheek: [f64; 2],
    pub right_jaw: [f64; 2],
}

/// Twice the signed triangle area.
fn cross2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl LandmarkSet {
    pub fn left_triangle(&self) -> [[f64; 2]; 3] {
        [self.left_jaw, self.left_cheek, self.nose_bridge_left]
    }

    pub fn right_triangle(&self) -> [[f64; 2]; 3] {
        [self.nose_bridge_right, self.right_cheek, self.right_jaw]
    }

    /// Rejects landmark sets whose triangles are too close to collinear to
    /// define an affine map.
    pub fn validate(&self) -> Result<(), MaskError> {
        for (which, t) in [
            ("left", self.left_triangle()),
            ("right", self.right_triangle()),
        ] {
            let area = cross2(t[0], t[1], t[2]).abs() / 2.0;
            if area <= 1e-6 {
                return Err(MaskError::DegenerateTriangle { which, area });
            }
        }
        Ok(())
    }

    fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> LandmarkSet {
        LandmarkSet {
            left_jaw: f(self.left_jaw),
            left_cheek: f(self.left_cheek),
            nose_bridge_left: f(self.nose_bridge_left),
            nose_bridge_right: f(self.nose_bridge_right),
            right_cheek: f(self.right_cheek),
            right_jaw: f(self.right_jaw),
        }
    }

    /// Shifts every point by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> LandmarkSet {
        self.map(|p| [p[0] + dx, p[1] + dy])
    }
}

/// RGBA mask art plus the anchor points the warp pins to face landmarks.
#[derive(Debug, Clone)]
pub struct MaskTemplate {
    pub image: RgbaImage,
    pub anchors: LandmarkSet,
}

const TEMPLATE_W: u32 = 96;
const TEMPLATE_H: u32 = 64;

fn template_anchors() -> LandmarkSet {
    LandmarkSet {
        left_jaw: [6.0, 58.0],
        left_cheek: [2.0, 20.0],
        nose_bridge_left: [42.0, 2.0],
        nose_bridge_right: [54.0, 2.0],
        right_cheek: [94.0, 20.0],
        right_jaw: [90.0, 58.0],
    }
}

/// Even-odd ray cast; boundary behavior is consistent for all pixels.
fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl MaskTemplate {
    /// Procedural surgical-style mask: a convex outline through the six
    /// anchors and a chin point, filled light blue with darker pleat bands.
    pub fn surgical() -> MaskTemplate {
        let anchors = template_anchors();
        let outline = [
            anchors.left_jaw,
            anchors.left_cheek,
            anchors.nose_bridge_left,
            anchors.nose_bridge_right,
            anchors.right_cheek,
            anchors.right_jaw,
            [48.0, 62.0],
        ];
        let mut image = RgbaImage::new(TEMPLATE_W, TEMPLATE_H);
        for y in 0..TEMPLATE_H {
            for x in 0..TEMPLATE_W {
                let inside = point_in_polygon(&outline, x as f64, y as f64);
                let pixel = if inside {
                    if y % 12 < 2 {
                        image::Rgba([70, 110, 170, 255])
                    } else {
                        image::Rgba([96, 140, 200, 255])
                    }
                } else {
                    image::Rgba([0, 0, 0, 0])
                };
                image.put_pixel(x, y, pixel);
            }
        }
        MaskTemplate { image, anchors }
    }

    /// Same geometry as [`MaskTemplate::surgical`] but fully transparent,
    /// useful for verifying that compositing never touches uncovered pixels.
    pub fn transparent() -> MaskTemplate {
        MaskTemplate {
            image: RgbaImage::new(TEMPLATE_W, TEMPLATE_H),
            anchors: template_anchors(),
        }
    }
}

/// Landmarks produced by pushing the template anchors through one random
/// global affine map (rotation, anisotropic scale, shear, translation).
///
/// Because a single affine generates all six points, the left and right
/// triangle maps recovered from these landmarks agree everywhere, which makes
/// warp-seam checks exact.
pub fn random_affine_landmarks(anchors: &LandmarkSet, rng: &mut RngState) -> LandmarkSet {
    let theta = rng.uniform(-0.3, 0.3);
    let sx = rng.uniform(0.8, 1.4);
    let sy = rng.uniform(0.8, 1.4);
    let shear = rng.uniform(-0.15, 0.15);
    let tx = rng.uniform(10.0, 60.0);
    let ty = rng.uniform(10.0, 60.0);
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    // The determinant works out to sx * sy, so the map is never degenerate.
    let a = cos * sx + (-sin) * sx * shear;
    let b = -sin * sy;
    let c = sin * sx + cos * sx * shear;
    let d = cos * sy;
    anchors.map(|p| [a * p[0] + b * p[1] + tx, c * p[0] + d * p[1] + ty])
}
