//! Multi-head scaled dot-product self-attention over one token sequence.

use super::softmax::softmax_rows;
use super::NnError;
use crate::tensor::Tensor;

/// Projection weights for one attention layer.
///
/// `wq`, `wk`, and `wv` hold one `[d_model, d_key]` matrix per head; `wo` is
/// the `[num_heads * d_key, d_model]` output projection. The same struct is
/// reused as the gradient container returned by [`mha_backward`], where every
/// field holds the gradient of the matching weight.
#[derive(Debug, Clone)]
pub struct MhaWeights {
    pub wq: Vec<Tensor>,
    pub wk: Vec<Tensor>,
    pub wv: Vec<Tensor>,
    pub wo: Tensor,
}

/// Intermediate activations saved by the forward pass for reuse in backward.
#[derive(Debug, Clone)]
pub struct MhaCache {
    pub q: Vec<Tensor>,
    pub k: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Row-stochastic attention matrix per head, shape `[n, n]`.
    pub attn: Vec<Tensor>,
    /// Concatenated head outputs, shape `[n, num_heads * d_key]`.
    pub concat: Tensor,
}

fn check_weights(x: &Tensor, w: &MhaWeights) -> Result<(usize, usize, usize), NnError> {
    let (_, d_model) = x.dims2();
    let heads = w.wq.len();
    if heads == 0 || w.wk.len() != heads || w.wv.len() != heads {
        return Err(NnError::ShapeMismatch {
            context: "attention head counts must match and be nonzero",
            lhs: vec![w.wq.len(), w.wk.len()],
            rhs: vec![w.wv.len()],
        });
    }
    let d_key = w.wq[0].shape()[1];
    for m in w.wq.iter().chain(&w.wk).chain(&w.wv) {
        if m.shape() != [d_model, d_key] {
            return Err(NnError::ShapeMismatch {
                context: "attention projection",
                lhs: x.shape().to_vec(),
                rhs: m.shape().to_vec(),
            });
        }
    }
    if w.wo.shape() != [heads * d_key, d_model] {
        return Err(NnError::ShapeMismatch {
            context: "attention output projection",
            lhs: vec![heads * d_key, d_model],
            rhs: w.wo.shape().to_vec(),
        });
    }
    Ok((heads, d_model, d_key))
}

fn columns(t: &Tensor, start: usize, width: usize) -> Tensor {
    let (rows, cols) = t.dims2();
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        let row = t.row(r);
        out.extend_from_slice(&row[start..start + width]);
    }
    let _ = cols;
    Tensor::new(vec![rows, width], out)
}

/// Self-attention forward over one sequence `x` of shape `[n, d_model]`.
pub fn mha_forward(x: &Tensor, w: &MhaWeights) -> Result<(Tensor, MhaCache), NnError> {
    let (heads, _, d_key) = check_weights(x, w)?;
    let n = x.shape()[0];
    let scale = 1.0 / libm::sqrt(d_key as f64);

    let mut q = Vec::with_capacity(heads);
    let mut k = Vec::with_capacity(heads);
    let mut v = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    let mut concat = vec![0.0; n * heads * d_key];
    for h in 0..heads {
        let qh = x.matmul(&w.wq[h]);
        let kh = x.matmul(&w.wk[h]);
        let vh = x.matmul(&w.wv[h]);
        let scores = qh.matmul(&kh.transpose()).scale(scale);
        let ah = softmax_rows(&scores);
        let oh = ah.matmul(&vh);
        for r in 0..n {
            let dst = r * heads * d_key + h * d_key;
            concat[dst..dst + d_key].copy_from_slice(oh.row(r));
        }
        q.push(qh);
        k.push(kh);
        v.push(vh);
        attn.push(ah);
    }
    let concat = Tensor::new(vec![n, heads * d_key], concat);
    let out = concat.matmul(&w.wo);
    Ok((out, MhaCache { q, k, v, attn, concat }))
}

/// Backward pass; returns `(dx, gradients)` with gradients shaped like the
/// weights.
pub fn mha_backward(
    x: &Tensor,
    w: &MhaWeights,
    cache: &MhaCache,
    d_out: &Tensor,
) -> (Tensor, MhaWeights) {
    let heads = w.wq.len();
    let d_key = w.wq[0].shape()[1];
    let n = x.shape()[0];
    let scale = 1.0 / libm::sqrt(d_key as f64);

    let d_concat = d_out.matmul(&w.wo.transpose());
    let d_wo = cache.concat.transpose().matmul(d_out);

    let mut dx = Tensor::zeros(x.shape().to_vec());
    let mut d_wq = Vec::with_capacity(heads);
    let mut d_wk = Vec::with_capacity(heads);
    let mut d_wv = Vec::with_capacity(heads);
    let x_t = x.transpose();
    for h in 0..heads {
        let d_oh = columns(&d_concat, h * d_key, d_key);
        let ah = &cache.attn[h];
        let d_attn = d_oh.matmul(&cache.v[h].transpose());
        let d_vh = ah.transpose().matmul(&d_oh);

        // Row-wise softmax backward: ds = a * (da - sum(da * a)).
        let mut d_scores = vec![0.0; n * n];
        for r in 0..n {
            let a_row = ah.row(r);
            let da_row = d_attn.row(r);
            let dot: f64 = a_row.iter().zip(da_row).map(|(a, da)| a * da).sum();
            for c in 0..n {
                d_scores[r * n + c] = a_row[c] * (da_row[c] - dot);
            }
        }
        let d_scores = Tensor::new(vec![n, n], d_scores);

        let d_qh = d_scores.matmul(&cache.k[h]).scale(scale);
        let d_kh = d_scores.transpose().matmul(&cache.q[h]).scale(scale);

        dx = dx
            .add(&d_qh.matmul(&w.wq[h].transpose()))
            .add(&d_kh.matmul(&w.wk[h].transpose()))
            .add(&d_vh.matmul(&w.wv[h].transpose()));
        d_wq.push(x_t.matmul(&d_qh));
        d_wk.push(x_t.matmul(&d_kh));
        d_wv.push(x_t.matmul(&d_vh));
    }
    (dx, MhaWeights { wq: d_wq, wk: d_wk, wv: d_wv, wo: d_wo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random_weights(
        rng: &mut RngState,
        heads: usize,
        d_model: usize,
        d_key: usize,
    ) -> MhaWeights {
        let mut mat = |rows: usize, cols: usize| {
            let mut t = Tensor::zeros(vec![rows, cols]);
            rng.fill_gaussian(t.data_mut());
            t.scale(0.5)
        };
        MhaWeights {
            wq: (0..heads).map(|_| mat(d_model, d_key)).collect(),
            wk: (0..heads).map(|_| mat(d_model, d_key)).collect(),
            wv: (0..heads).map(|_| mat(d_model, d_key)).collect(),
            wo: mat(heads * d_key, d_model),
        }
    }

    #[test]
    fn single_token_reduces_to_value_projection() {
        // With one token the attention matrix is the 1x1 identity, so the
        // output is x * wv * wo regardless of wq and wk.
        let x = Tensor::new(vec![1, 2], vec![3.0, -1.5]);
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let w = MhaWeights {
            wq: vec![Tensor::new(vec![2, 2], vec![9.0, 8.0, 7.0, 6.0])],
            wk: vec![Tensor::new(vec![2, 2], vec![-1.0, 2.0, 0.5, 3.0])],
            wv: vec![eye.clone()],
            wo: eye,
        };
        let (out, cache) = mha_forward(&x, &w).unwrap();
        assert_eq!(out.data(), x.data());
        assert_eq!(cache.attn[0].data(), &[1.0]);
    }

    #[test]
    fn identical_tokens_attend_uniformly() {
        let x = Tensor::new(vec![2, 3], vec![0.4, -0.2, 1.0, 0.4, -0.2, 1.0]);
        let mut rng = RngState::new(7);
        let w = random_weights(&mut rng, 2, 3, 2);
        let (out, cache) = mha_forward(&x, &w).unwrap();
        for ah in &cache.attn {
            for a in ah.data() {
                assert!((a - 0.5).abs() < 1e-12, "uniform attention expected, got {a}");
            }
        }
        assert_eq!(out.row(0), out.row(1), "identical tokens give identical outputs");
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let (n, d_model, heads, d_key) = (3, 4, 2, 2);
        let mut rng = RngState::new(42);
        let mut x = Tensor::zeros(vec![n, d_model]);
        rng.fill_gaussian(x.data_mut());
        let w = random_weights(&mut rng, heads, d_model, d_key);
        let (out, _) = mha_forward(&x, &w).unwrap();

        // Independent recomputation with plain loops over Vec<f64>.
        let mul = |a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize| -> Vec<f64> {
            let mut out = vec![0.0; ar * bc];
            for i in 0..ar {
                for kk in 0..ac {
                    let aik = a[i * ac + kk];
                    for j in 0..bc {
                        out[i * bc + j] += aik * b[kk * bc + j];
                    }
                }
            }
            out
        };
        let xs = x.data();
        let mut concat = vec![0.0; n * heads * d_key];
        for h in 0..heads {
            let q = mul(xs, n, d_model, w.wq[h].data(), d_key);
            let k = mul(xs, n, d_model, w.wk[h].data(), d_key);
            let v = mul(xs, n, d_model, w.wv[h].data(), d_key);
            for i in 0..n {
                let mut scores = vec![0.0; n];
                for j in 0..n {
                    let mut s = 0.0;
                    for c in 0..d_key {
                        s += q[i * d_key + c] * k[j * d_key + c];
                    }
                    scores[j] = s / (d_key as f64).sqrt();
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
                let total: f64 = exps.iter().sum();
                for c in 0..d_key {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += exps[j] / total * v[j * d_key + c];
                    }
                    concat[i * heads * d_key + h * d_key + c] = acc;
                }
            }
        }
        let expect = mul(&concat, n, heads * d_key, w.wo.data(), d_model);
        for (a, b) in out.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "oracle mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = RngState::new(99);
        let mut x = Tensor::zeros(vec![5, 6]);
        rng.fill_gaussian(x.data_mut());
        let w = random_weights(&mut rng, 3, 6, 2);
        let (_, cache) = mha_forward(&x, &w).unwrap();
        for ah in &cache.attn {
            for r in 0..5 {
                let sum: f64 = ah.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_projection_rejected() {
        let x = Tensor::zeros(vec![3, 4]);
        let bad = Tensor::zeros(vec![5, 2]);
        let w = MhaWeights {
            wq: vec![bad.clone()],
            wk: vec![bad.clone()],
            wv: vec![bad],
            wo: Tensor::zeros(vec![2, 4]),
        };
        assert!(matches!(
            mha_forward(&x, &w),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_produces_weight_shaped_gradients() {
        let mut rng = RngState::new(5);
        let mut x = Tensor::zeros(vec![4, 6]);
        rng.fill_gaussian(x.data_mut());
        let w = random_weights(&mut rng, 2, 6, 3);
        let (out, cache) = mha_forward(&x, &w).unwrap();
        let mut d_out = Tensor::zeros(out.shape().to_vec());
        rng.fill_gaussian(d_out.data_mut());
        let (dx, grads) = mha_backward(&x, &w, &cache, &d_out);
        assert_eq!(dx.shape(), x.shape());
        assert_eq!(grads.wo.shape(), w.wo.shape());
        for h in 0..2 {
            assert_eq!(grads.wq[h].shape(), w.wq[h].shape());
            assert_eq!(grads.wk[h].shape(), w.wk[h].shape());
            assert_eq!(grads.wv[h].shape(), w.wv[h].shape());
        }
    }
}
