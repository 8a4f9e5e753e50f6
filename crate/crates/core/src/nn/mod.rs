//! Deterministic neural layer library: forward passes, exact backward passes,
//! a finite-difference gradient checker, and the Adam optimizer.
//!
//! Every operation is a pure function of its inputs. Layers that need
//! randomness (dropout) take an explicit [`crate::rng::RngState`]. Backward
//! passes are hand-derived per layer and verified against central finite
//! differences in `gradcheck`.

pub mod activation;
pub mod adam;
pub mod attention;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod norm;
pub mod patchify;
pub mod softmax;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{context}: shape {lhs:?} is incompatible with {rhs:?}")]
    ShapeMismatch {
        context: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("normalized axis is empty")]
    EmptyAxis,
    #[error("batch normalization in train mode needs a batch of at least 2, got {batch}")]
    DegenerateBatch { batch: usize },
    #[error("dropout probability must lie in [0, 1), got {p}")]
    InvalidProbability { p: f64 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("patch size {patch} does not divide image dimensions {height}x{width}")]
    PatchSize {
        patch: usize,
        height: usize,
        width: usize,
    },
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },
}

pub use activation::{gelu, gelu_backward};
pub use adam::{adam_step, AdamParams, AdamState};
pub use attention::{mha_forward, mha_backward, MhaCache, MhaWeights};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout_backward, dropout_forward, DropoutMask, Mode};
pub use gradcheck::{grad_check, run_gradient_suite, GradCheckReport};
pub use norm::{
    batchnorm_backward, batchnorm_forward, layernorm_backward, layernorm_forward, BatchNormStats,
};
pub use patchify::{patchify, unpatchify};
pub use softmax::{softmax_cross_entropy, softmax_cross_entropy_backward, softmax_rows};
