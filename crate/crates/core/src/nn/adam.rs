//! Adam optimizer with bias-corrected moment estimates.

use super::NnError;
use crate::tensor::Tensor;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    /// Zero-initialized state matching the given parameter tensors.
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            t: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }
}

/// One Adam update over all parameters in place.
///
/// `names` is used only for error reporting; a non-finite gradient aborts the
/// step before any parameter has been touched.
pub fn adam_step(
    names: &[String],
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<(), NnError> {
    if params.len() != grads.len()
        || params.len() != names.len()
        || params.len() != state.m.len()
    {
        return Err(NnError::ShapeMismatch {
            context: "adam_step parameter/gradient/state counts",
            lhs: vec![params.len(), grads.len()],
            rhs: vec![names.len(), state.m.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(NnError::ShapeMismatch {
                context: "adam_step gradient shape",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(NnError::NonFiniteGradient { name: names[i].clone() });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(hp.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(hp.beta2, t as f64);
    for i in 0..params.len() {
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(grads[i].data()) {
            *mj = hp.beta1 * *mj + (1.0 - hp.beta1) * gj;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(grads[i].data()) {
            *vj = hp.beta2 * *vj + (1.0 - hp.beta2) * gj * gj;
        }
        let p = params[i].data_mut();
        for j in 0..p.len() {
            let m_hat = state.m[i].data()[j] / bc1;
            let v_hat = state.v[i].data()[j] / bc2;
            p[j] -= hp.lr * m_hat / (libm::sqrt(v_hat) + hp.eps);
        }
    }
    Ok(())
}
