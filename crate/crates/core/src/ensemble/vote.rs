//! Majority voting over member predictions.
//!
//! The winner is the class with the most argmax votes. A tie on vote count
//! falls back to the probability mass the tied classes collected across all
//! members, and a residual exact tie picks the lowest class index.

use super::EnsembleError;

/// Per-class probabilities: non-negative, summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl serde::Serialize for ProbVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for ProbVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        ProbVector::new(values).map_err(serde::de::Error::custom)
    }
}

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EnsembleError> {
        if values.len() < 2 {
            return Err(EnsembleError::BadProbabilities(format!(
                "need at least 2 classes, got {}",
                values.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(EnsembleError::BadProbabilities(format!(
                    "class {i} has probability {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::BadProbabilities(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ProbVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability, lowest index on exact ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// One member's prediction. The argmax is derived from the probabilities at
/// construction, so the two can never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteRecord {
    member: String,
    argmax: usize,
    probs: ProbVector,
}

impl VoteRecord {
    pub fn new(member: impl Into<String>, probs: ProbVector) -> Self {
        let argmax = probs.argmax();
        VoteRecord {
            member: member.into(),
            argmax,
            probs,
        }
    }

    pub fn member(&self) -> &str {
        &self.member
    }

    pub fn argmax(&self) -> usize {
        self.argmax
    }

    pub fn probs(&self) -> &ProbVector {
        &self.probs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    VoteCount,
    SummedProbability,
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteDiagnostics {
    pub vote_counts: Vec<usize>,
    /// Classes sharing the top vote count, ascending; a single entry means
    /// the vote count alone decided.
    pub tied_classes: Vec<usize>,
    /// Summed probabilities for `tied_classes`; empty when there was no tie.
    pub tie_break_sums: Vec<f64>,
    pub decided_by: TieBreak,
}

pub fn majority_vote(
    records: &[VoteRecord],
) -> Result<(usize, VoteDiagnostics), EnsembleError> {
    let first = records.first().ok_or_else(|| {
        EnsembleError::InvalidConfig("majority_vote needs at least one record".into())
    })?;
    let classes = first.probs().len();
    for r in records {
        if r.probs().len() != classes {
            return Err(EnsembleError::ClassCountMismatch {
                lhs: classes,
                rhs: r.probs().len(),
            });
        }
    }

    let mut vote_counts = vec![0usize; classes];
    for r in records {
        vote_counts[r.argmax()] += 1;
    }
    let top = *vote_counts.iter().max().expect("at least two classes");
    let tied: Vec<usize> = (0..classes).filter(|&c| vote_counts[c] == top).collect();

    if tied.len() == 1 {
        let winner = tied[0];
        return Ok((
            winner,
            VoteDiagnostics {
                vote_counts,
                tied_classes: tied,
                tie_break_sums: Vec::new(),
                decided_by: TieBreak::VoteCount,
            },
        ));
    }

    let sums: Vec<f64> = tied
        .iter()
        .map(|&c| records.iter().map(|r| r.probs().values()[c]).sum())
        .collect();
    let best_sum = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = tied
        .iter()
        .zip(&sums)
        .filter(|(_, &s)| s == best_sum)
        .map(|(&c, _)| c)
        .collect();
    let decided_by = if winners.len() == 1 {
        TieBreak::SummedProbability
    } else {
        TieBreak::LowestIndex
    };
    Ok((
        winners[0],
        VoteDiagnostics {
            vote_counts,
            tied_classes: tied,
            tie_break_sums: sums,
            decided_by,
        },
    ))
}
