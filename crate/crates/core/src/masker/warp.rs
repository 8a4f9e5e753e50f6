//! Piecewise-affine warp of the mask template onto a face.

use image::{RgbImage, RgbaImage};

use super::{cross2, LandmarkSet, MaskError, MaskTemplate};

/// `(x, y) -> (a x + b y + c, d x + e y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineMap {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.a * p[0] + self.b * p[1] + self.c,
            self.d * p[0] + self.e * p[1] + self.f,
        ]
    }
}

/// The unique affine map sending the three `src` points to the three `dst`
/// points, solved exactly by Cramer's rule.
pub fn solve_affine(src: [[f64; 2]; 3], dst: [[f64; 2]; 3]) -> Result<AffineMap, MaskError> {
    let det = cross2(src[0], src[1], src[2]);
    if det.abs() <= 2e-6 {
        return Err(MaskError::DegenerateTriangle { which: "source", area: det.abs() / 2.0 });
    }
    // Rows of the 3x3 system are [x_i, y_i, 1]; solve separately for the
    // output x and y coefficients.
    let minors = |rhs: [f64; 3]| -> [f64; 3] {
        let [p0, p1, p2] = src;
        let da = rhs[0] * (p1[1] - p2[1]) - p0[1] * (rhs[1] - rhs[2])
            + (rhs[1] * p2[1] - rhs[2] * p1[1]);
        let db = p0[0] * (rhs[1] - rhs[2]) - rhs[0] * (p1[0] - p2[0])
            + (p1[0] * rhs[2] - p2[0] * rhs[1]);
        let dc = p0[0] * (p1[1] * rhs[2] - p2[1] * rhs[1])
            - p0[1] * (p1[0] * rhs[2] - p2[0] * rhs[1])
            + rhs[0] * (p1[0] * p2[1] - p2[0] * p1[1]);
        [da / det, db / det, dc / det]
    };
    let [a, b, c] = minors([dst[0][0], dst[1][0], dst[2][0]]);
    let [d, e, f] = minors([dst[0][1], dst[1][1], dst[2][1]]);
    Ok(AffineMap { a, b, c, d, e, f })
}

/// Inverse maps from face coordinates back into template coordinates, one per
/// triangle, plus the template-space seam the two regions meet at.
#[derive(Debug, Clone, Copy)]
pub struct AffinePair {
    pub left: AffineMap,
    pub right: AffineMap,
    /// Template x coordinate separating the two regions.
    pub seam_x: f64,
}

impl AffinePair {
    /// Solves both inverse maps for a landmark set.
    pub fn from_landmarks(
        anchors: &LandmarkSet,
        landmarks: &LandmarkSet,
    ) -> Result<AffinePair, MaskError> {
        landmarks.validate()?;
        let left = solve_affine(landmarks.left_triangle(), anchors.left_triangle())?;
        let right = solve_affine(landmarks.right_triangle(), anchors.right_triangle())?;
        let seam_x = (anchors.nose_bridge_left[0] + anchors.nose_bridge_right[0]) / 2.0;
        Ok(AffinePair { left, right, seam_x })
    }

    /// Template coordinate for a face pixel: the left inverse decides which
    /// side of the seam the pixel falls on, the winning map provides the
    /// sample position.
    pub fn source_for(&self, p: [f64; 2]) -> [f64; 2] {
        let s = self.left.apply(p);
        if s[0] <= self.seam_x {
            s
        } else {
            self.right.apply(p)
        }
    }
}

/// Premultiplied RGBA sample in [0, 1]; coordinates outside the template are
/// fully transparent. Bilinear weights are exact at integer coordinates, so an
/// identity or whole-pixel-translation warp reproduces template pixels bit for
/// bit.
fn sample_premultiplied(template: &RgbaImage, p: [f64; 2]) -> [f64; 4] {
    let (w, h) = (template.width() as i64, template.height() as i64);
    let x0 = libm::floor(p[0]) as i64;
    let y0 = libm::floor(p[1]) as i64;
    let fx = p[0] - x0 as f64;
    let fy = p[1] - y0 as f64;
    let mut acc = [0.0; 4];
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let weight = wx * wy;
            if weight == 0.0 {
                continue;
            }
            let (x, y) = (x0 + dx, y0 + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let px = template.get_pixel(x as u32, y as u32);
            let alpha = px[3] as f64 / 255.0;
            acc[0] += weight * alpha * px[0] as f64 / 255.0;
            acc[1] += weight * alpha * px[1] as f64 / 255.0;
            acc[2] += weight * alpha * px[2] as f64 / 255.0;
            acc[3] += weight * alpha;
        }
    }
    acc
}

/// Warps the template over the face and composites it source-over.
///
/// Pixels whose sampled alpha is exactly zero are skipped without touching the
/// destination, so uncovered regions stay byte-identical to the input.
pub fn apply_mask(
    face: &RgbImage,
    landmarks: &LandmarkSet,
    template: &MaskTemplate,
) -> Result<RgbImage, MaskError> {
    let pair = AffinePair::from_landmarks(&template.anchors, landmarks)?;
    let mut out = face.clone();
    for y in 0..face.height() {
        for x in 0..face.width() {
            let src = pair.source_for([x as f64, y as f64]);
            let [pr, pg, pb, alpha] = sample_premultiplied(&template.image, src);
            if alpha == 0.0 {
                continue;
            }
            let dst = out.get_pixel_mut(x, y);
            for (channel, premul) in dst.0.iter_mut().zip([pr, pg, pb]) {
                let blended = premul * 255.0 + *channel as f64 * (1.0 - alpha);
                *channel = libm::round(blended) as u8;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masker::random_affine_landmarks;
    use crate::rng::RngState;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_triangle_gives_identity_map() {
        let tri = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let m = solve_affine(tri, tri).unwrap();
        assert!(close(m.a, 1.0, 1e-12) && close(m.e, 1.0, 1e-12));
        assert!(close(m.b, 0.0, 1e-12) && close(m.d, 0.0, 1e-12));
        assert!(close(m.c, 0.0, 1e-12) && close(m.f, 0.0, 1e-12));
    }

    #[test]
    fn translation_recovered_exactly() {
        let src = [[1.0, 2.0], [5.0, 3.0], [2.0, 7.0]];
        let dst = [[6.0, 7.0], [10.0, 8.0], [7.0, 12.0]];
        let m = solve_affine(src, dst).unwrap();
        assert!(close(m.a, 1.0, 1e-12) && close(m.e, 1.0, 1e-12));
        assert!(close(m.c, 5.0, 1e-12) && close(m.f, 5.0, 1e-12));
    }

    #[test]
    fn degenerate_source_triangle_rejected() {
        let src = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let dst = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            solve_affine(src, dst),
            Err(MaskError::DegenerateTriangle { .. })
        ));
    }

    /// Independent oracle: fit the six affine coefficients by least squares
    /// over the three point pairs. With exactly three non-collinear points the
    /// least-squares solution is the interpolant, so it must agree with the
    /// direct solve.
    #[test]
    fn random_triangles_match_normal_equation_oracle() {
        let mut rng = RngState::new(2024);
        let mut checked = 0;
        while checked < 1000 {
            let mut pt = || [rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0)];
            let src = [pt(), pt(), pt()];
            let dst = [pt(), pt(), pt()];
            if cross2(src[0], src[1], src[2]).abs() < 1.0 {
                continue;
            }
            checked += 1;
            let m = solve_affine(src, dst).unwrap();

            // Normal equations A^T A u = A^T b for u = (a, b, c) with rows
            // (x_i, y_i, 1), solved by 3x3 Gaussian elimination.
            let solve3 = |mut mat: [[f64; 4]; 3]| -> [f64; 3] {
                for col in 0..3 {
                    let piv = (col..3)
                        .max_by(|&i, &j| {
                            mat[i][col].abs().partial_cmp(&mat[j][col].abs()).unwrap()
                        })
                        .unwrap();
                    mat.swap(col, piv);
                    for row in 0..3 {
                        if row != col {
                            let k = mat[row][col] / mat[col][col];
                            for c in col..4 {
                                mat[row][c] -= k * mat[col][c];
                            }
                        }
                    }
                }
                [mat[0][3] / mat[0][0], mat[1][3] / mat[1][1], mat[2][3] / mat[2][2]]
            };
            let normal = |values: [f64; 3]| -> [f64; 3] {
                let mut ata = [[0.0f64; 4]; 3];
                for (i, s) in src.iter().enumerate() {
                    let row = [s[0], s[1], 1.0];
                    for r in 0..3 {
                        for c in 0..3 {
                            ata[r][c] += row[r] * row[c];
                        }
                        ata[r][3] += row[r] * values[i];
                    }
                }
                solve3(ata)
            };
            let [a, b, c] = normal([dst[0][0], dst[1][0], dst[2][0]]);
            let [d, e, f] = normal([dst[0][1], dst[1][1], dst[2][1]]);
            for (got, want) in [
                (m.a, a),
                (m.b, b),
                (m.c, c),
                (m.d, d),
                (m.e, e),
                (m.f, f),
            ] {
                assert!(
                    close(got, want, 1e-6),
                    "coefficient mismatch: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn affine_interpolates_its_vertices() {
        let mut rng = RngState::new(555);
        for _ in 0..1000 {
            let anchors = super::super::template_anchors();
            let lm = random_affine_landmarks(&anchors, &mut rng);
            let left = solve_affine(anchors.left_triangle(), lm.left_triangle()).unwrap();
            for (s, d) in anchors
                .left_triangle()
                .iter()
                .zip(lm.left_triangle())
            {
                let got = left.apply(*s);
                assert!(
                    close(got[0], d[0], 0.5) && close(got[1], d[1], 0.5),
                    "anchor mapped to {got:?}, landmark at {d:?}"
                );
            }
            let right = solve_affine(anchors.right_triangle(), lm.right_triangle()).unwrap();
            for (s, d) in anchors
                .right_triangle()
                .iter()
                .zip(lm.right_triangle())
            {
                let got = right.apply(*s);
                assert!(close(got[0], d[0], 0.5) && close(got[1], d[1], 0.5));
            }
        }
    }

    #[test]
    fn seam_sides_agree_for_affine_consistent_landmarks() {
        let anchors = super::super::template_anchors();
        let mut rng = RngState::new(31337);
        for _ in 0..1000 {
            let lm = random_affine_landmarks(&anchors, &mut rng);
            let pair = AffinePair::from_landmarks(&anchors, &lm).unwrap();
            // Walk the seam in face space by mapping template seam points
            // forward through the left triangle's forward map.
            let forward = solve_affine(anchors.left_triangle(), lm.left_triangle()).unwrap();
            for i in 0..20 {
                let t = [pair.seam_x, 2.0 + 3.0 * i as f64];
                let p = forward.apply(t);
                let sl = pair.left.apply(p);
                let sr = pair.right.apply(p);
                let gap = libm::sqrt(
                    (sl[0] - sr[0]) * (sl[0] - sr[0]) + (sl[1] - sr[1]) * (sl[1] - sr[1]),
                );
                assert!(gap < 1e-9, "seam gap {gap} at {p:?}");
            }
        }
    }

    fn checker_face(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let v = (31 * x + 57 * y) as u8;
            image::Rgb([v, v.wrapping_mul(3), v.wrapping_add(100)])
        })
    }

    #[test]
    fn transparent_template_leaves_face_byte_identical() {
        let face = checker_face(120, 100);
        let template = MaskTemplate::transparent();
        let landmarks = template.anchors.translate(10.0, 15.0);
        let out = apply_mask(&face, &landmarks, &template).unwrap();
        assert_eq!(out.as_raw(), face.as_raw());
    }

    #[test]
    fn identity_landmarks_paste_the_template_directly() {
        let face = checker_face(120, 100);
        let template = MaskTemplate::surgical();
        let out = apply_mask(&face, &template.anchors, &template).unwrap();
        for y in 0..100u32 {
            for x in 0..120u32 {
                let expected = if x < template.image.width() && y < template.image.height() {
                    let p = template.image.get_pixel(x, y);
                    if p[3] == 255 {
                        image::Rgb([p[0], p[1], p[2]])
                    } else {
                        *face.get_pixel(x, y)
                    }
                } else {
                    *face.get_pixel(x, y)
                };
                assert_eq!(*out.get_pixel(x, y), expected, "pixel ({x}, {y})");
            }
        }
    }

    /// Anchors and offsets are small integers, so the inverse translation is
    /// solved exactly and every output byte is predictable.
    #[test]
    fn whole_pixel_translation_shifts_the_overlay_exactly() {
        let face = checker_face(140, 120);
        let template = MaskTemplate::surgical();
        let shifted =
            apply_mask(&face, &template.anchors.translate(5.0, 5.0), &template).unwrap();
        for y in 0..120u32 {
            for x in 0..140u32 {
                let (tx, ty) = (x.wrapping_sub(5), y.wrapping_sub(5));
                let covered = tx < template.image.width() && ty < template.image.height();
                let expected = if covered {
                    let p = template.image.get_pixel(tx, ty);
                    if p[3] == 255 {
                        image::Rgb([p[0], p[1], p[2]])
                    } else {
                        *face.get_pixel(x, y)
                    }
                } else {
                    *face.get_pixel(x, y)
                };
                assert_eq!(*shifted.get_pixel(x, y), expected, "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn landmarks_partially_off_image_only_touch_covered_pixels() {
        let face = checker_face(60, 60);
        let template = MaskTemplate::surgical();
        // Push most of the mask off the left edge.
        let landmarks = template.anchors.translate(-70.0, 0.0);
        let out = apply_mask(&face, &landmarks, &template).unwrap();
        // Columns beyond the mask's reach are untouched.
        for y in 0..60u32 {
            for x in 30..60u32 {
                assert_eq!(out.get_pixel(x, y), face.get_pixel(x, y));
            }
        }
    }
}
