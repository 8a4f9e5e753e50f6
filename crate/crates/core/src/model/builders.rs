//! Constructors for the two model families used in the experiments.

use serde::{Deserialize, Serialize};

use super::{Layer, Model, ModelConfig, ModelError, ParamStore};
use crate::nn::BatchNormStats;
use crate::rng::RngState;
use crate::tensor::Tensor;

const BN_MOMENTUM: f64 = 0.1;
const NORM_EPS: f64 = 1e-5;

/// Classifier head applied to precomputed embedding vectors:
/// dropout, batch normalization, then a linear map to class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadClassifierConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_head_classifier_dropout")]
    pub dropout_p: f64,
}

fn default_head_classifier_dropout() -> f64 {
    0.5
}

/// Patch transformer classifier over raw images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViTConfig {
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub d_model: usize,
    #[serde(default = "default_num_blocks")]
    pub num_blocks: usize,
    #[serde(default = "default_num_heads")]
    pub num_heads: usize,
    #[serde(default = "default_d_key")]
    pub d_key: usize,
    #[serde(default = "default_encoder_dropout")]
    pub encoder_dropout: f64,
    #[serde(default = "default_head_units")]
    pub head_units: Vec<usize>,
    #[serde(default = "default_head_dropout")]
    pub head_dropout: f64,
    pub num_classes: usize,
}

fn default_num_blocks() -> usize {
    10
}
fn default_num_heads() -> usize {
    8
}
fn default_d_key() -> usize {
    64
}
fn default_encoder_dropout() -> f64 {
    0.3
}
fn default_head_units() -> Vec<usize> {
    vec![2048, 1024]
}
fn default_head_dropout() -> f64 {
    0.6
}

impl ViTConfig {
    /// Config with the standard depth, attention geometry, and head sizes.
    pub fn standard(
        image_size: usize,
        channels: usize,
        patch_size: usize,
        d_model: usize,
        num_classes: usize,
    ) -> Self {
        ViTConfig {
            image_size,
            channels,
            patch_size,
            d_model,
            num_blocks: default_num_blocks(),
            num_heads: default_num_heads(),
            d_key: default_d_key(),
            encoder_dropout: default_encoder_dropout(),
            head_units: default_head_units(),
            head_dropout: default_head_dropout(),
            num_classes,
        }
    }
}

/// Glorot-normal weight matrix.
fn glorot(rng: &mut RngState, rows: usize, cols: usize) -> Tensor {
    let sigma = libm::sqrt(2.0 / (rows + cols) as f64);
    let mut t = Tensor::zeros(vec![rows, cols]);
    rng.fill_gaussian(t.data_mut());
    t.scale(sigma)
}

struct Builder {
    params: ParamStore,
    stats: Vec<BatchNormStats>,
    rng: RngState,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder { params: ParamStore::new(), stats: Vec::new(), rng: RngState::new(seed) }
    }

    fn dense(&mut self, name: &str, d_in: usize, d_out: usize) -> Layer {
        let w = glorot(&mut self.rng, d_in, d_out);
        let wi = self.params.add(format!("{name}.w"), w);
        let bi = self.params.add(format!("{name}.b"), Tensor::zeros(vec![d_out]));
        Layer::Dense { w: wi, b: bi }
    }

    fn layernorm(&mut self, name: &str, d: usize) -> Layer {
        let g = self.params.add(format!("{name}.gamma"), Tensor::ones(vec![d]));
        let b = self.params.add(format!("{name}.beta"), Tensor::zeros(vec![d]));
        Layer::LayerNorm { gamma: g, beta: b, eps: NORM_EPS }
    }

    fn batchnorm(&mut self, name: &str, d: usize) -> Layer {
        let g = self.params.add(format!("{name}.gamma"), Tensor::ones(vec![d]));
        let b = self.params.add(format!("{name}.beta"), Tensor::zeros(vec![d]));
        let s = self.stats.len();
        self.stats.push(BatchNormStats::new(d));
        Layer::BatchNorm { gamma: g, beta: b, stats: s, momentum: BN_MOMENTUM, eps: NORM_EPS }
    }

    fn attention(&mut self, name: &str, d_model: usize, heads: usize, d_key: usize) -> Layer {
        let mut wq = Vec::with_capacity(heads);
        let mut wk = Vec::with_capacity(heads);
        let mut wv = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = glorot(&mut self.rng, d_model, d_key);
            wq.push(self.params.add(format!("{name}.q{h}"), q));
            let k = glorot(&mut self.rng, d_model, d_key);
            wk.push(self.params.add(format!("{name}.k{h}"), k));
            let v = glorot(&mut self.rng, d_model, d_key);
            wv.push(self.params.add(format!("{name}.v{h}"), v));
        }
        let o = glorot(&mut self.rng, heads * d_key, d_model);
        let wo = self.params.add(format!("{name}.o"), o);
        Layer::MultiHeadAttention { wq, wk, wv, wo }
    }
}

/// Builds the embedding-head classifier.
pub fn build_head_classifier(
    config: &HeadClassifierConfig,
    seed: u64,
) -> Result<Model, ModelError> {
    if config.input_dim == 0 || config.num_classes < 2 {
        return Err(ModelError::InvalidConfig(format!(
            "head classifier needs input_dim > 0 and at least 2 classes, got {} and {}",
            config.input_dim, config.num_classes
        )));
    }
    if !(0.0..1.0).contains(&config.dropout_p) {
        return Err(ModelError::InvalidConfig(format!(
            "dropout probability {} outside [0, 1)",
            config.dropout_p
        )));
    }
    let mut b = Builder::new(seed);
    let layers = vec![
        Layer::Dropout { p: config.dropout_p },
        b.batchnorm("bn", config.input_dim),
        b.dense("logits", config.input_dim, config.num_classes),
    ];
    Ok(Model {
        config: ModelConfig::HeadClassifier(config.clone()),
        layers,
        params: b.params,
        stats: b.stats,
    })
}

/// Builds the patch transformer classifier.
pub fn build_vit(config: &ViTConfig, seed: u64) -> Result<Model, ModelError> {
    if config.patch_size == 0 || config.image_size % config.patch_size != 0 {
        return Err(ModelError::InvalidConfig(format!(
            "patch size {} must divide image size {}",
            config.patch_size, config.image_size
        )));
    }
    if config.channels == 0
        || config.d_model == 0
        || config.num_blocks == 0
        || config.num_heads == 0
        || config.d_key == 0
        || config.num_classes < 2
    {
        return Err(ModelError::InvalidConfig(
            "transformer dimensions must be nonzero and classes at least 2".to_string(),
        ));
    }
    for p in [config.encoder_dropout, config.head_dropout] {
        if !(0.0..1.0).contains(&p) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
    }

    let side = config.image_size / config.patch_size;
    let n_patches = side * side;
    let patch_dim = config.patch_size * config.patch_size * config.channels;
    let d = config.d_model;

    let mut b = Builder::new(seed);
    let mut layers = vec![
        Layer::Patchify {
            patch: config.patch_size,
            height: config.image_size,
            width: config.image_size,
            channels: config.channels,
        },
        b.dense("patch_proj", patch_dim, d),
    ];
    let pos = Tensor::zeros(vec![n_patches, d]);
    let mut pos = pos;
    b.rng.fill_gaussian(pos.data_mut());
    let pos = pos.scale(0.02);
    let e = b.params.add("pos_embed", pos);
    layers.push(Layer::AddPositionEmbedding { e });

    for blk in 0..config.num_blocks {
        let attn = vec![
            b.layernorm(&format!("block{blk}.ln1"), d),
            b.attention(&format!("block{blk}.attn"), d, config.num_heads, config.d_key),
        ];
        layers.push(Layer::Residual { inner: attn });
        let mlp = vec![
            b.layernorm(&format!("block{blk}.ln2"), d),
            b.dense(&format!("block{blk}.mlp1"), d, 2 * d),
            Layer::Gelu,
            Layer::Dropout { p: config.encoder_dropout },
            b.dense(&format!("block{blk}.mlp2"), 2 * d, d),
        ];
        layers.push(Layer::Residual { inner: mlp });
    }

    layers.push(b.layernorm("final_ln", d));
    layers.push(Layer::MeanPoolRows);

    let mut prev = d;
    for (i, &units) in config.head_units.iter().enumerate() {
        layers.push(b.dense(&format!("head{i}"), prev, units));
        layers.push(Layer::Gelu);
        layers.push(Layer::Dropout { p: config.head_dropout });
        prev = units;
    }
    layers.push(b.dense("logits", prev, config.num_classes));

    Ok(Model {
        config: ModelConfig::Vit(config.clone()),
        layers,
        params: b.params,
        stats: b.stats,
    })
}

/// Builds a model of either family from its serialized config.
pub fn build_from_config(config: &ModelConfig, seed: u64) -> Result<Model, ModelError> {
    match config {
        ModelConfig::HeadClassifier(c) => build_head_classifier(c, seed),
        ModelConfig::Vit(c) => build_vit(c, seed),
    }
}
