//! Deterministic train/test splitting.

use super::manifest::DatasetManifest;
use super::DataError;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.95,
            seed: 777,
        }
    }
}

/// FNV-1a over the manifest's ids, for comparing partitions across runs.
pub fn id_digest(manifest: &DatasetManifest) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for r in manifest.records() {
        for &byte in r.id.as_bytes().iter().chain(b"\n") {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

/// Splits into train/test by a seeded Fisher-Yates permutation.
///
/// The train side gets `floor(train_fraction * N)` records, the test side the
/// remainder. Both outputs keep the input record order and the full parent
/// vocabulary, so class indices stay comparable even for labels that end up
/// on one side only.
pub fn split_dataset(
    manifest: &DatasetManifest,
    spec: SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest), DataError> {
    if manifest.is_empty() {
        return Err(DataError::InvalidConfig("cannot split an empty manifest".into()));
    }
    let (train_idx, test_idx) = split_indices(manifest.len(), spec)?;
    let pick = |idx: &[usize]| {
        let records = idx.iter().map(|&i| manifest.records()[i].clone()).collect();
        DatasetManifest::with_vocab(records, manifest.vocab().to_vec())
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// The index partition behind [`split_dataset`], usable for datasets that are
/// not manifests (embedding sets, in-memory example lists). Both sides come
/// back sorted ascending, so they preserve the caller's record order.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if n == 0 {
        return Err(DataError::InvalidConfig("cannot split an empty dataset".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = RngState::with_counter(spec.seed, 0);
    rng.shuffle(&mut order);

    // The epsilon keeps exact products like 0.95 * 100 from flooring to 94
    // when the f64 rounds just below the integer.
    let train_n = libm::floor(spec.train_fraction * n as f64 + 1e-9) as usize;
    let mut train_idx: Vec<usize> = order[..train_n].to_vec();
    let mut test_idx: Vec<usize> = order[train_n..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((train_idx, test_idx))
}
