//! Core library for masked-face recognition experiments: tensors, a small
//! neural-network stack, mask overlay warping, dataset handling, ensembling,
//! and evaluation reports.

pub mod data;
pub mod ensemble;
pub mod eval;
pub mod masker;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
