//! GELU activation using the exact Gaussian CDF (erf-based, not the tanh
//! approximation).

use crate::tensor::Tensor;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Standard normal density.
fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Elementwise `x * Phi(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(|v| v * phi(v))
}

/// Gradient of GELU: `Phi(x) + x * pdf(x)`, applied to the upstream gradient.
pub fn gelu_backward(x: &Tensor, d_out: &Tensor) -> Tensor {
    x.zip_map(d_out, |v, g| g * (phi(v) + v * pdf(v)))
}
