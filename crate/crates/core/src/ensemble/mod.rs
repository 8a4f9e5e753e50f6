//! Majority-voting ensembles: validation folds for training diverse members
//! and vote aggregation over their per-class probabilities.

mod folds;
mod predict;
mod vote;

pub use folds::{make_folds, Fold};
pub use predict::{ensemble_predict, member_vote, EnsembleMember};
pub use vote::{majority_vote, ProbVector, TieBreak, VoteDiagnostics, VoteRecord};

use crate::nn::NnError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid probability vector: {0}")]
    BadProbabilities(String),
    #[error("members disagree on class count: {lhs} vs {rhs}")]
    ClassCountMismatch { lhs: usize, rhs: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}
