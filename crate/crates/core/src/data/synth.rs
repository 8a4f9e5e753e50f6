//! Deterministic synthetic images for end-to-end classifier tests.

use crate::rng::RngState;
use crate::tensor::Tensor;

const TAU: f64 = std::f64::consts::TAU;

/// Each class gets a sinusoidal grating with its own frequency pair and
/// phase; the frequency grid keeps all class patterns distinct.
fn class_pattern(class: usize, size: usize, channels: usize) -> Tensor {
    let fx = 1 + (class % 3) as i64;
    let fy = 1 + ((class / 3) % 3) as i64;
    let phase = 0.9 * class as f64;
    let mut data = Vec::with_capacity(size * size * channels);
    for y in 0..size {
        for x in 0..size {
            for c in 0..channels {
                let arg = TAU * (fx * x as i64 + fy * y as i64) as f64 / size as f64
                    + phase
                    + 0.5 * c as f64;
                data.push(0.5 + 0.4 * libm::sin(arg));
            }
        }
    }
    Tensor::new(vec![size, size, channels], data)
}

/// Generates `classes * per_class` images of shape `[size, size, channels]`
/// with per-pixel Gaussian jitter of width `noise`, class-major, labels dense.
pub fn synth_images(
    classes: usize,
    per_class: usize,
    size: usize,
    channels: usize,
    noise: f64,
    rng: &mut RngState,
) -> (Vec<Tensor>, Vec<usize>) {
    assert!(classes >= 2, "need at least two classes, got {classes}");
    assert!(classes <= 9, "frequency grid only separates up to 9 classes");
    assert!(per_class >= 1 && size >= 2 && channels >= 1, "degenerate image spec");
    assert!(noise >= 0.0, "noise must be non-negative");

    let patterns: Vec<Tensor> = (0..classes)
        .map(|k| class_pattern(k, size, channels))
        .collect();
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (k, pattern) in patterns.iter().enumerate() {
        for _ in 0..per_class {
            let mut jitter = vec![0.0; pattern.len()];
            rng.fill_gaussian(&mut jitter);
            let data = pattern
                .data()
                .iter()
                .zip(&jitter)
                .map(|(p, j)| p + noise * j)
                .collect();
            images.push(Tensor::new(pattern.shape().to_vec(), data));
            labels.push(k);
        }
    }
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_labels_and_determinism() {
        let mut a = RngState::new(31);
        let mut b = RngState::new(31);
        let (img_a, lab_a) = synth_images(4, 3, 8, 2, 0.05, &mut a);
        let (img_b, lab_b) = synth_images(4, 3, 8, 2, 0.05, &mut b);
        assert_eq!(img_a.len(), 12);
        assert_eq!(lab_a, [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert_eq!(lab_a, lab_b);
        for (x, y) in img_a.iter().zip(&img_b) {
            assert_eq!(x.shape(), [8, 8, 2], "image shape");
            let bits_equal = x
                .data()
                .iter()
                .zip(y.data())
                .all(|(p, q)| p.to_bits() == q.to_bits());
            assert!(bits_equal, "same seed must reproduce images bit-exactly");
        }
    }

    #[test]
    fn zero_noise_makes_samples_identical_within_a_class() {
        let mut rng = RngState::new(8);
        let (images, labels) = synth_images(3, 4, 6, 1, 0.0, &mut rng);
        for k in 0..3 {
            let class: Vec<_> = images
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == k)
                .map(|(img, _)| img)
                .collect();
            for img in &class {
                assert_eq!(*img, class[0], "class {k} collapses onto its pattern");
            }
        }
    }

    #[test]
    fn class_patterns_are_pairwise_distinct() {
        let mut rng = RngState::new(9);
        let (images, _) = synth_images(8, 1, 16, 1, 0.0, &mut rng);
        for i in 0..8 {
            for j in (i + 1)..8 {
                let diff: f64 = images[i]
                    .data()
                    .iter()
                    .zip(images[j].data())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / images[i].len() as f64;
                assert!(
                    diff > 0.05,
                    "classes {i} and {j} are too similar (mean diff {diff})"
                );
            }
        }
    }

    #[test]
    fn values_stay_in_a_sane_range_with_small_noise() {
        let mut rng = RngState::new(10);
        let (images, _) = synth_images(5, 2, 8, 3, 0.02, &mut rng);
        for img in &images {
            assert!(img.all_finite());
            for &v in img.data() {
                assert!((-0.5..1.5).contains(&v), "value {v} out of range");
            }
        }
    }
}
