pub mod ensemble;
pub mod eval;
pub mod gradcheck;
pub mod mask;
pub mod predict;
pub mod split;
pub mod synth;
pub mod train;
