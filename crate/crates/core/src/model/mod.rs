//! Model assembly: layer graph, parameter store, and the forward/backward
//! passes shared by the transformer classifier and the embedding head.

mod builders;
mod checkpoint;
mod train;

pub use builders::{
    build_from_config, build_head_classifier, build_vit, HeadClassifierConfig, ViTConfig,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use train::{
    evaluate_top1, fit, train_epoch, EpochRecord, EpochStats, FitConfig, FitHistory,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    batchnorm_backward, batchnorm_forward, dense_backward, dense_forward, dropout_backward,
    dropout_forward, gelu, gelu_backward, layernorm_backward, layernorm_forward, mha_backward,
    mha_forward, patchify, unpatchify, BatchNormStats, DropoutMask, MhaCache, MhaWeights, Mode,
    NnError,
};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Named parameter tensors in registration order. Names double as checkpoint
/// record keys, so they must be unique.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    /// Registers a tensor under a unique name and returns its index.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name:?}"
        );
        let idx = self.tensors.len();
        self.index.insert(name.clone(), idx);
        self.names.push(name);
        self.tensors.push(tensor);
        idx
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Disjoint borrows for optimizer calls that need names alongside
    /// mutable parameters.
    pub fn names_and_tensors_mut(&mut self) -> (&[String], &mut [Tensor]) {
        (&self.names, &mut self.tensors)
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Zero tensors shaped like every parameter, used as gradient accumulators.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// One step of the computation graph. Parameters are referenced by index into
/// the model's [`ParamStore`]; batch-norm running stats by index into its
/// buffer list.
#[derive(Debug, Clone)]
pub enum Layer {
    /// `[batch, H, W, C]` to `[batch, patches, patch*patch*C]`.
    Patchify { patch: usize, height: usize, width: usize, channels: usize },
    /// Affine map over the last axis.
    Dense { w: usize, b: usize },
    /// Adds a learned `[patches, d_model]` table to every example.
    AddPositionEmbedding { e: usize },
    LayerNorm { gamma: usize, beta: usize, eps: f64 },
    BatchNorm { gamma: usize, beta: usize, stats: usize, momentum: f64, eps: f64 },
    Dropout { p: f64 },
    Gelu,
    MultiHeadAttention { wq: Vec<usize>, wk: Vec<usize>, wv: Vec<usize>, wo: usize },
    /// `[batch, rows, d]` to `[batch, d]` by averaging rows.
    MeanPoolRows,
    /// Adds the block input to the output of the inner layer chain.
    Residual { inner: Vec<Layer> },
}

/// Per-layer activations retained by the training forward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Patchify { in_shape: Vec<usize> },
    Dense { x: Tensor },
    AddPositionEmbedding,
    LayerNorm { x: Tensor },
    BatchNorm { x: Tensor },
    Dropout { mask: DropoutMask },
    Gelu { x: Tensor },
    MultiHeadAttention { x: Tensor, per_example: Vec<MhaCache> },
    MeanPoolRows { rows: usize },
    Residual { inner: Vec<LayerCache> },
}

/// Serializable description of how to rebuild a model's layer graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    HeadClassifier(HeadClassifierConfig),
    Vit(ViTConfig),
}

impl ModelConfig {
    pub fn num_classes(&self) -> usize {
        match self {
            ModelConfig::HeadClassifier(c) => c.num_classes,
            ModelConfig::Vit(c) => c.num_classes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub layers: Vec<Layer>,
    pub params: ParamStore,
    pub stats: Vec<BatchNormStats>,
}

/// Extracts example `i` from a batch tensor `[batch, rest..]` as `[rest..]`.
fn example(x: &Tensor, i: usize) -> Tensor {
    let per = x.len() / x.shape()[0];
    let shape: Vec<usize> = x.shape()[1..].to_vec();
    Tensor::new(shape, x.data()[i * per..(i + 1) * per].to_vec())
}

/// Stacks equally shaped examples into `[batch, rest..]`.
pub fn stack_examples(examples: &[Tensor]) -> Result<Tensor, NnError> {
    let first = examples.first().ok_or(NnError::EmptyInput {
        context: "stack_examples",
    })?;
    let mut shape = vec![examples.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(examples.len() * first.len());
    for e in examples {
        if e.shape() != first.shape() {
            return Err(NnError::ShapeMismatch {
                context: "stack_examples",
                lhs: first.shape().to_vec(),
                rhs: e.shape().to_vec(),
            });
        }
        data.extend_from_slice(e.data());
    }
    Ok(Tensor::new(shape, data))
}

fn last_dim(x: &Tensor) -> usize {
    *x.shape().last().expect("tensor with at least one axis")
}

/// Applies a dense layer over the last axis of a tensor of any rank.
fn dense_any_rank(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let d_in = last_dim(x);
    let rows = x.len() / d_in;
    let flat = x.reshape(vec![rows, d_in]);
    let y = dense_forward(&flat, w, b)?;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = w.shape()[1];
    Ok(y.reshape(shape))
}

fn dense_any_rank_backward(
    x: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d_in = last_dim(x);
    let d_o = last_dim(d_out);
    let rows = x.len() / d_in;
    let (dx, dw, db) = dense_backward(
        &x.reshape(vec![rows, d_in]),
        w,
        &d_out.reshape(vec![rows, d_o]),
    );
    (dx.reshape(x.shape().to_vec()), dw, db)
}

fn forward_layer(
    layer: &Layer,
    x: &Tensor,
    params: &ParamStore,
    stats: &mut [BatchNormStats],
    train: bool,
    rng: &mut RngState,
) -> Result<(Tensor, LayerCache), NnError> {
    match layer {
        Layer::Patchify { patch, .. } => {
            let batch = x.shape()[0];
            let mut rows = Vec::with_capacity(batch);
            for i in 0..batch {
                rows.push(patchify(&example(x, i), *patch)?);
            }
            let out = stack_examples(&rows)?;
            Ok((out, LayerCache::Patchify { in_shape: x.shape().to_vec() }))
        }
        Layer::Dense { w, b } => {
            let out = dense_any_rank(x, params.get(*w), params.get(*b))?;
            Ok((out, LayerCache::Dense { x: x.clone() }))
        }
        Layer::AddPositionEmbedding { e } => {
            let table = params.get(*e);
            if x.rank() != 3 || &x.shape()[1..] != table.shape() {
                return Err(NnError::ShapeMismatch {
                    context: "position embedding",
                    lhs: x.shape().to_vec(),
                    rhs: table.shape().to_vec(),
                });
            }
            let batch = x.shape()[0];
            let per = table.len();
            let mut data = x.data().to_vec();
            for i in 0..batch {
                for (d, t) in data[i * per..(i + 1) * per].iter_mut().zip(table.data()) {
                    *d += t;
                }
            }
            Ok((
                Tensor::new(x.shape().to_vec(), data),
                LayerCache::AddPositionEmbedding,
            ))
        }
        Layer::LayerNorm { gamma, beta, eps } => {
            let out = layernorm_forward(x, params.get(*gamma), params.get(*beta), *eps)?;
            Ok((out, LayerCache::LayerNorm { x: x.clone() }))
        }
        Layer::BatchNorm { gamma, beta, stats: s, momentum, eps } => {
            let out = batchnorm_forward(
                x,
                params.get(*gamma),
                params.get(*beta),
                &mut stats[*s],
                train,
                *momentum,
                *eps,
            )?;
            Ok((out, LayerCache::BatchNorm { x: x.clone() }))
        }
        Layer::Dropout { p } => {
            let mode = if train { Mode::Train } else { Mode::Eval };
            let (out, mask) = dropout_forward(x, *p, mode, rng)?;
            Ok((out, LayerCache::Dropout { mask }))
        }
        Layer::Gelu => Ok((gelu(x), LayerCache::Gelu { x: x.clone() })),
        Layer::MultiHeadAttention { wq, wk, wv, wo } => {
            let weights = MhaWeights {
                wq: wq.iter().map(|&i| params.get(i).clone()).collect(),
                wk: wk.iter().map(|&i| params.get(i).clone()).collect(),
                wv: wv.iter().map(|&i| params.get(i).clone()).collect(),
                wo: params.get(*wo).clone(),
            };
            let batch = x.shape()[0];
            let mut outs = Vec::with_capacity(batch);
            let mut caches = Vec::with_capacity(batch);
            for i in 0..batch {
                let (o, c) = mha_forward(&example(x, i), &weights)?;
                outs.push(o);
                caches.push(c);
            }
            Ok((
                stack_examples(&outs)?,
                LayerCache::MultiHeadAttention { x: x.clone(), per_example: caches },
            ))
        }
        Layer::MeanPoolRows => {
            if x.rank() != 3 {
                return Err(NnError::ShapeMismatch {
                    context: "mean pooling expects [batch, rows, d]",
                    lhs: x.shape().to_vec(),
                    rhs: vec![0, 0, 0],
                });
            }
            let (batch, rows, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut out = vec![0.0; batch * d];
            for i in 0..batch {
                for r in 0..rows {
                    for c in 0..d {
                        out[i * d + c] += x.data()[(i * rows + r) * d + c];
                    }
                }
            }
            for v in out.iter_mut() {
                *v /= rows as f64;
            }
            Ok((
                Tensor::new(vec![batch, d], out),
                LayerCache::MeanPoolRows { rows },
            ))
        }
        Layer::Residual { inner } => {
            let mut cur = x.clone();
            let mut caches = Vec::with_capacity(inner.len());
            for l in inner {
                let (next, cache) = forward_layer(l, &cur, params, stats, train, rng)?;
                cur = next;
                caches.push(cache);
            }
            if cur.shape() != x.shape() {
                return Err(NnError::ShapeMismatch {
                    context: "residual branch must preserve shape",
                    lhs: x.shape().to_vec(),
                    rhs: cur.shape().to_vec(),
                });
            }
            Ok((cur.add(x), LayerCache::Residual { inner: caches }))
        }
    }
}

fn backward_layer(
    layer: &Layer,
    cache: &LayerCache,
    d_out: &Tensor,
    params: &ParamStore,
    grads: &mut [Tensor],
) -> Tensor {
    match (layer, cache) {
        (Layer::Patchify { patch, height, width, channels }, LayerCache::Patchify { in_shape }) => {
            let batch = in_shape[0];
            let mut rows = Vec::with_capacity(batch);
            for i in 0..batch {
                let g = example(d_out, i);
                rows.push(
                    unpatchify(&g, *height, *width, *channels, *patch)
                        .expect("patchify backward mirrors forward"),
                );
            }
            stack_examples(&rows).expect("nonempty batch")
        }
        (Layer::Dense { w, b }, LayerCache::Dense { x }) => {
            let (dx, dw, db) = dense_any_rank_backward(x, params.get(*w), d_out);
            grads[*w].add_assign(&dw);
            grads[*b].add_assign(&db);
            dx
        }
        (Layer::AddPositionEmbedding { e }, LayerCache::AddPositionEmbedding) => {
            let batch = d_out.shape()[0];
            let per = d_out.len() / batch;
            let mut de = vec![0.0; per];
            for i in 0..batch {
                for (acc, g) in de.iter_mut().zip(&d_out.data()[i * per..(i + 1) * per]) {
                    *acc += g;
                }
            }
            grads[*e].add_assign(&Tensor::new(grads[*e].shape().to_vec(), de));
            d_out.clone()
        }
        (Layer::LayerNorm { gamma, eps, beta }, LayerCache::LayerNorm { x }) => {
            let (dx, dgamma, dbeta) = layernorm_backward(x, params.get(*gamma), *eps, d_out);
            grads[*gamma].add_assign(&dgamma);
            grads[*beta].add_assign(&dbeta);
            dx
        }
        (Layer::BatchNorm { gamma, beta, eps, .. }, LayerCache::BatchNorm { x }) => {
            let (dx, dgamma, dbeta) = batchnorm_backward(x, params.get(*gamma), *eps, d_out);
            grads[*gamma].add_assign(&dgamma);
            grads[*beta].add_assign(&dbeta);
            dx
        }
        (Layer::Dropout { p }, LayerCache::Dropout { mask }) => dropout_backward(d_out, mask, *p),
        (Layer::Gelu, LayerCache::Gelu { x }) => gelu_backward(x, d_out),
        (
            Layer::MultiHeadAttention { wq, wk, wv, wo },
            LayerCache::MultiHeadAttention { x, per_example },
        ) => {
            let weights = MhaWeights {
                wq: wq.iter().map(|&i| params.get(i).clone()).collect(),
                wk: wk.iter().map(|&i| params.get(i).clone()).collect(),
                wv: wv.iter().map(|&i| params.get(i).clone()).collect(),
                wo: params.get(*wo).clone(),
            };
            let batch = x.shape()[0];
            let mut dxs = Vec::with_capacity(batch);
            for i in 0..batch {
                let (dx_i, g) = mha_backward(
                    &example(x, i),
                    &weights,
                    &per_example[i],
                    &example(d_out, i),
                );
                dxs.push(dx_i);
                for h in 0..wq.len() {
                    grads[wq[h]].add_assign(&g.wq[h]);
                    grads[wk[h]].add_assign(&g.wk[h]);
                    grads[wv[h]].add_assign(&g.wv[h]);
                }
                grads[*wo].add_assign(&g.wo);
            }
            stack_examples(&dxs).expect("nonempty batch")
        }
        (Layer::MeanPoolRows, LayerCache::MeanPoolRows { rows }) => {
            let (batch, d) = d_out.dims2();
            let mut dx = vec![0.0; batch * rows * d];
            for i in 0..batch {
                for r in 0..*rows {
                    for c in 0..d {
                        dx[(i * rows + r) * d + c] = d_out.data()[i * d + c] / *rows as f64;
                    }
                }
            }
            Tensor::new(vec![batch, *rows, d], dx)
        }
        (Layer::Residual { inner }, LayerCache::Residual { inner: caches }) => {
            let mut d = d_out.clone();
            for (l, c) in inner.iter().zip(caches).rev() {
                d = backward_layer(l, c, &d, params, grads);
            }
            d.add(d_out)
        }
        _ => unreachable!("layer and cache kinds always match"),
    }
}

impl Model {
    /// Training forward pass: updates batch-norm running stats, samples
    /// dropout from `rng`, and returns activations needed by [`Model::backward`].
    pub fn forward_train(
        &mut self,
        x: &Tensor,
        rng: &mut RngState,
    ) -> Result<(Tensor, Vec<LayerCache>), NnError> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = forward_layer(layer, &cur, &self.params, &mut self.stats, true, rng)?;
            cur = next;
            caches.push(cache);
        }
        Ok((cur, caches))
    }

    /// Inference forward pass: deterministic, consumes no randomness, and
    /// leaves running stats untouched.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut stats = self.stats.clone();
        let mut rng = RngState::new(0);
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, _) = forward_layer(layer, &cur, &self.params, &mut stats, false, &mut rng)?;
            cur = next;
        }
        debug_assert_eq!(rng.counter, 0, "eval must not consume randomness");
        Ok(cur)
    }

    /// Backpropagates `d_logits` through the cached forward pass, returning
    /// one gradient tensor per parameter in store order.
    pub fn backward(&self, caches: &[LayerCache], d_logits: &Tensor) -> Vec<Tensor> {
        let mut grads = self.params.zeros_like();
        let mut d = d_logits.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            d = backward_layer(layer, cache, &d, &self.params, &mut grads);
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax_cross_entropy;

    fn toy_vit_config() -> ViTConfig {
        ViTConfig {
            image_size: 8,
            channels: 1,
            patch_size: 4,
            d_model: 8,
            num_blocks: 2,
            num_heads: 2,
            d_key: 4,
            encoder_dropout: 0.0,
            head_units: vec![8],
            head_dropout: 0.0,
            num_classes: 3,
        }
    }

    fn random_tensor(rng: &mut RngState, shape: Vec<usize>) -> Tensor {
        let mut t = Tensor::zeros(shape);
        rng.fill_gaussian(t.data_mut());
        t
    }

    fn train_loss(model: &Model, x: &Tensor, labels: &[usize]) -> f64 {
        let mut m = model.clone();
        let mut rng = RngState::new(0);
        let (logits, _) = m.forward_train(x, &mut rng).unwrap();
        softmax_cross_entropy(&logits, labels).unwrap().0
    }

    /// Transformer gradients against central differences on sampled
    /// parameter coordinates. Dropout is 0, so the train forward used by the
    /// loss is deterministic.
    #[test]
    fn whole_model_gradients_match_finite_differences() {
        let mut model = build_vit(&toy_vit_config(), 17).unwrap();
        let mut rng = RngState::new(4);
        let x = random_tensor(&mut rng, vec![3, 8, 8, 1]);
        let labels = [0usize, 2, 1];

        let mut probe = RngState::new(0);
        let (logits, caches) = model.forward_train(&x, &mut probe).unwrap();
        let (_, probs) = softmax_cross_entropy(&logits, &labels).unwrap();
        let d_logits = crate::nn::softmax_cross_entropy_backward(&probs, &labels);
        let grads = model.backward(&caches, &d_logits);

        let h = 1e-5;
        let n_params = model.params.len();
        for _ in 0..20 {
            let pi = rng.next_below(n_params as u64) as usize;
            let ci = rng.next_below(model.params.get(pi).len() as u64) as usize;
            let mut plus = model.clone();
            plus.params.get_mut(pi).data_mut()[ci] += h;
            let mut minus = model.clone();
            minus.params.get_mut(pi).data_mut()[ci] -= h;
            let numeric =
                (train_loss(&plus, &x, &labels) - train_loss(&minus, &x, &labels)) / (2.0 * h);
            let analytic = grads[pi].data()[ci];
            let rel = (analytic - numeric).abs()
                / f64::max(1e-8, analytic.abs() + numeric.abs());
            assert!(
                rel < 1e-4,
                "parameter {} coord {ci}: analytic {analytic} vs numeric {numeric}",
                model.params.name(pi)
            );
        }
    }

    /// With the patch projection, every attention output projection, and every
    /// block MLP output zeroed, tokens carry only position embeddings, and the
    /// residual paths must pass them through unchanged: the logits cannot
    /// depend on the image at all.
    #[test]
    fn zeroed_input_paths_make_logits_input_invariant() {
        let mut model = build_vit(&toy_vit_config(), 13).unwrap();
        let mut rng = RngState::new(6);
        let x = random_tensor(&mut rng, vec![2, 8, 8, 1]);

        // Shuffle pixel positions inside each 4x4 patch, same pattern per patch.
        let mut perm: Vec<usize> = (0..16).collect();
        rng.shuffle(&mut perm);
        let mut permuted = x.clone();
        for ex in 0..2 {
            for py in 0..2 {
                for px in 0..2 {
                    let mut vals = [0.0; 16];
                    for (k, v) in vals.iter_mut().enumerate() {
                        let (dy, dx) = (k / 4, k % 4);
                        *v = x.data()[((ex * 8 + py * 4 + dy) * 8) + px * 4 + dx];
                    }
                    for (k, &src) in perm.iter().enumerate() {
                        let (dy, dx) = (k / 4, k % 4);
                        permuted.data_mut()[((ex * 8 + py * 4 + dy) * 8) + px * 4 + dx] =
                            vals[src];
                    }
                }
            }
        }
        let before = model.forward_eval(&x).unwrap();
        let before_perm = model.forward_eval(&permuted).unwrap();
        assert!(
            before.data() != before_perm.data(),
            "sanity: an untouched model must react to the permutation"
        );

        for i in 0..model.params.len() {
            let name = model.params.name(i).to_string();
            if name.starts_with("patch_proj.")
                || name.ends_with(".attn.o")
                || name.starts_with("block") && name.contains(".mlp2.")
            {
                model.params.get_mut(i).fill(0.0);
            }
        }
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&permuted).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            assert_eq!(va.to_bits(), vb.to_bits(), "logits must ignore the image");
        }
    }

    #[test]
    fn stack_and_example_roundtrip() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let stacked = stack_examples(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(stacked.shape(), &[2, 2, 2]);
        assert_eq!(example(&stacked, 0), a);
        assert_eq!(example(&stacked, 1), b);
    }

    #[test]
    fn stack_rejects_mixed_shapes() {
        let a = Tensor::zeros(vec![2]);
        let b = Tensor::zeros(vec![3]);
        assert!(matches!(
            stack_examples(&[a, b]),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stack_rejects_empty_input() {
        assert_eq!(
            stack_examples(&[]),
            Err(NnError::EmptyInput { context: "stack_examples" })
        );
    }

    #[test]
    fn duplicate_parameter_name_panics() {
        let result = std::panic::catch_unwind(|| {
            let mut store = ParamStore::new();
            store.add("w", Tensor::zeros(vec![1]));
            store.add("w", Tensor::zeros(vec![1]));
        });
        assert!(result.is_err());
    }
}
