//! Conversion between images and flattened non-overlapping patches.

use super::NnError;
use crate::tensor::Tensor;

/// Splits an `[H, W, C]` image into `[(H/P)*(W/P), P*P*C]` patch rows.
///
/// Patches are ordered row-major starting at the top-left corner; within a
/// patch the values keep their `[row, col, channel]` order.
pub fn patchify(image: &Tensor, patch: usize) -> Result<Tensor, NnError> {
    let dims = image.shape();
    if dims.len() != 3 {
        return Err(NnError::ShapeMismatch {
            context: "patchify expects a rank-3 [H, W, C] image",
            lhs: dims.to_vec(),
            rhs: vec![0, 0, 0],
        });
    }
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(NnError::PatchSize { patch, height: h, width: w });
    }
    let (ph, pw) = (h / patch, w / patch);
    let mut out = Vec::with_capacity(h * w * c);
    let src = image.data();
    for py in 0..ph {
        for px in 0..pw {
            for dy in 0..patch {
                let y = py * patch + dy;
                for dx in 0..patch {
                    let x = px * patch + dx;
                    let base = (y * w + x) * c;
                    out.extend_from_slice(&src[base..base + c]);
                }
            }
        }
    }
    Ok(Tensor::new(vec![ph * pw, patch * patch * c], out))
}

/// Inverse of [`patchify`]: reassembles patch rows into the original image.
pub fn unpatchify(
    patches: &Tensor,
    height: usize,
    width: usize,
    channels: usize,
    patch: usize,
) -> Result<Tensor, NnError> {
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(NnError::PatchSize { patch, height, width });
    }
    let (ph, pw) = (height / patch, width / patch);
    let expected = vec![ph * pw, patch * patch * channels];
    if patches.shape() != expected.as_slice() {
        return Err(NnError::ShapeMismatch {
            context: "unpatchify patch grid",
            lhs: patches.shape().to_vec(),
            rhs: expected,
        });
    }
    let mut out = vec![0.0; height * width * channels];
    let src = patches.data();
    let row_len = patch * patch * channels;
    for py in 0..ph {
        for px in 0..pw {
            let patch_base = (py * pw + px) * row_len;
            for dy in 0..patch {
                let y = py * patch + dy;
                for dx in 0..patch {
                    let x = px * patch + dx;
                    let dst = (y * width + x) * channels;
                    let s = patch_base + (dy * patch + dx) * channels;
                    out[dst..dst + channels].copy_from_slice(&src[s..s + channels]);
                }
            }
        }
    }
    Ok(Tensor::new(vec![height, width, channels], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_four_single_channel() {
        // Values 0..16 laid out row-major.
        let image = Tensor::new(vec![4, 4, 1], (0..16).map(|v| v as f64).collect());
        let patches = patchify(&image, 2).unwrap();
        assert_eq!(patches.shape(), &[4, 4]);
        // Top-left patch holds rows 0-1, cols 0-1.
        assert_eq!(patches.row(0), &[0.0, 1.0, 4.0, 5.0]);
        // Top-right patch holds rows 0-1, cols 2-3.
        assert_eq!(patches.row(1), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(patches.row(2), &[8.0, 9.0, 12.0, 13.0]);
        assert_eq!(patches.row(3), &[10.0, 11.0, 14.0, 15.0]);
    }

    #[test]
    fn rgb_shape_and_roundtrip() {
        let data: Vec<f64> = (0..16 * 16 * 3).map(|v| (v % 251) as f64 * 0.5).collect();
        let image = Tensor::new(vec![16, 16, 3], data);
        let patches = patchify(&image, 4).unwrap();
        assert_eq!(patches.shape(), &[16, 48]);
        let back = unpatchify(&patches, 16, 16, 3, 4).unwrap();
        assert_eq!(back.data(), image.data(), "roundtrip must be bit-exact");
    }

    #[test]
    fn indivisible_size_rejected() {
        let image = Tensor::zeros(vec![5, 5, 1]);
        let err = patchify(&image, 2).unwrap_err();
        assert_eq!(err, NnError::PatchSize { patch: 2, height: 5, width: 5 });
    }
}
