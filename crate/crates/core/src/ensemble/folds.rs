//! Per-member validation folds over a shared training pool.

use crate::data::DatasetManifest;
use crate::rng::RngState;

use super::EnsembleError;

/// One member's view of the pool: it validates on `val` and trains on
/// everything else, so the K validation sets are disjoint but the K training
/// sets overlap heavily. That is the point: members see almost all the data
/// while early-stopping against different slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
}

pub fn make_folds(
    pool: &DatasetManifest,
    members: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<Vec<Fold>, EnsembleError> {
    if members < 2 {
        return Err(EnsembleError::InvalidConfig(format!(
            "an ensemble needs at least 2 members, got {members}"
        )));
    }
    if !(val_fraction > 0.0) || !val_fraction.is_finite() {
        return Err(EnsembleError::InvalidConfig(format!(
            "val_fraction must be a finite positive value, got {val_fraction}"
        )));
    }
    let budget = members as f64 * val_fraction;
    if budget > 1.0 + 1e-9 {
        return Err(EnsembleError::InvalidConfig(format!(
            "{members} validation folds of fraction {val_fraction} need {budget:.3} of the pool"
        )));
    }
    let n = pool.len();
    let per = libm::floor(val_fraction * n as f64 + 1e-9) as usize;
    if per == 0 {
        return Err(EnsembleError::InvalidConfig(format!(
            "validation fold would be empty: fraction {val_fraction} of {n} records"
        )));
    }
    debug_assert!(members * per <= n);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = RngState::with_counter(seed, 0);
    rng.shuffle(&mut order);

    let mut folds = Vec::with_capacity(members);
    for i in 0..members {
        let mut in_val = vec![false; n];
        for &idx in &order[i * per..(i + 1) * per] {
            in_val[idx] = true;
        }
        let side = |keep_val: bool| {
            let records = pool
                .records()
                .iter()
                .enumerate()
                .filter(|(idx, _)| in_val[*idx] == keep_val)
                .map(|(_, r)| r.clone())
                .collect();
            DatasetManifest::with_vocab(records, pool.vocab().to_vec())
        };
        folds.push(Fold {
            train: side(false),
            val: side(true),
        });
    }
    Ok(folds)
}
