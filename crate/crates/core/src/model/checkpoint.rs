//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            4 bytes  "MFBC"
//! version          u32
//! config length    u32
//! config           JSON for the model's [`ModelConfig`]
//! record count     u32
//! per record:
//!   name length    u32
//!   name           UTF-8
//!   rank           u32
//!   extents        rank x u32
//!   values         product(extents) x f64
//! ```
//!
//! Records hold every trainable parameter in store order followed by the
//! running mean and variance of each batch-norm layer, so a loaded model
//! reproduces inference output bit for bit.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{build_from_config, Model, ModelConfig, ModelError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MFBC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn stat_names(index: usize) -> (String, String) {
    (
        format!("bn{index}.running_mean"),
        format!("bn{index}.running_var"),
    )
}

fn push_record(out: &mut Vec<u8>, name: &str, tensor: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let config = serde_json::to_vec(&model.config)
        .map_err(|e| CheckpointError::Format(format!("config serialization: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);

    let count = model.params.len() + 2 * model.stats.len();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (i, tensor) in model.params.tensors().iter().enumerate() {
        push_record(&mut out, model.params.name(i), tensor);
    }
    for (i, stats) in model.stats.iter().enumerate() {
        let (mean_name, var_name) = stat_names(i);
        push_record(&mut out, &mean_name, &stats.running_mean);
        push_record(&mut out, &var_name, &stats.running_var);
    }
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Format(format!(
                "unexpected end of file while reading {what} at offset {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }
}

enum Target {
    Param(usize),
    StatMean(usize),
    StatVar(usize),
}

pub fn load_checkpoint(path: &Path) -> Result<Model, CheckpointError> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4, "magic")? != MAGIC {
        return Err(CheckpointError::Format("bad magic, not a checkpoint file".to_string()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let config_len = cur.u32("config length")? as usize;
    let config_bytes = cur.take(config_len, "config")?;
    let config: ModelConfig = serde_json::from_slice(config_bytes)
        .map_err(|e| CheckpointError::Format(format!("config json: {e}")))?;

    // Seed is irrelevant: every parameter is overwritten below.
    let mut model = build_from_config(&config, 0)?;

    let mut targets: HashMap<String, Target> = HashMap::new();
    for (i, name) in model.params.names().iter().enumerate() {
        targets.insert(name.clone(), Target::Param(i));
    }
    for i in 0..model.stats.len() {
        let (mean_name, var_name) = stat_names(i);
        targets.insert(mean_name, Target::StatMean(i));
        targets.insert(var_name, Target::StatVar(i));
    }

    let count = cur.u32("record count")? as usize;
    if count != targets.len() {
        return Err(CheckpointError::Format(format!(
            "record count {count} does not match the {} tensors this config defines",
            targets.len()
        )));
    }

    let mut seen: HashMap<String, bool> = HashMap::new();
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|e| CheckpointError::Format(format!("record name: {e}")))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32("extent")? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cur.take(len * 8, "values")?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, values);

        let target = targets.get(&name).ok_or_else(|| {
            CheckpointError::Format(format!("unknown record {name:?} for this config"))
        })?;
        if seen.insert(name.clone(), true).is_some() {
            return Err(CheckpointError::Format(format!("duplicate record {name:?}")));
        }
        let slot = match target {
            Target::Param(i) => model.params.get_mut(*i),
            Target::StatMean(i) => &mut model.stats[*i].running_mean,
            Target::StatVar(i) => &mut model.stats[*i].running_var,
        };
        if slot.shape() != tensor.shape() {
            return Err(CheckpointError::Format(format!(
                "record {name:?} has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    if cur.pos != bytes.len() {
        return Err(CheckpointError::Format(format!(
            "{} trailing bytes after the last record",
            bytes.len() - cur.pos
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_head_classifier, build_vit, fit, FitConfig, HeadClassifierConfig, ViTConfig,
    };
    use crate::nn::AdamParams;
    use crate::rng::RngState;

    fn trained_head() -> Model {
        let mut model = build_head_classifier(
            &HeadClassifierConfig { input_dim: 4, num_classes: 3, dropout_p: 0.2 },
            5,
        )
        .unwrap();
        let mut rng = RngState::new(8);
        let xs: Vec<Tensor> = (0..12)
            .map(|_| {
                let mut t = Tensor::zeros(vec![4]);
                rng.fill_gaussian(t.data_mut());
                t
            })
            .collect();
        let ys: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let config = FitConfig {
            epochs: 3,
            batch_size: 4,
            adam: AdamParams::default(),
            patience: None,
            seed: 3,
        };
        fit(&mut model, &xs, &ys, &xs, &ys, &config).unwrap();
        model
    }

    fn random_batch(rng: &mut RngState, shape: Vec<usize>) -> Tensor {
        let mut t = Tensor::zeros(shape);
        rng.fill_gaussian(t.data_mut());
        t
    }

    #[test]
    fn head_roundtrip_reproduces_logits_bit_for_bit() {
        let model = trained_head();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        assert_eq!(loaded.config, model.config);
        let mut rng = RngState::new(99);
        let x = random_batch(&mut rng, vec![5, 4]);
        let a = model.forward_eval(&x).unwrap();
        let b = loaded.forward_eval(&x).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn transformer_roundtrip_reproduces_logits_bit_for_bit() {
        let config = ViTConfig {
            image_size: 8,
            channels: 1,
            patch_size: 4,
            d_model: 8,
            num_blocks: 1,
            num_heads: 2,
            d_key: 4,
            encoder_dropout: 0.0,
            head_units: vec![8],
            head_dropout: 0.0,
            num_classes: 3,
        };
        let model = build_vit(&config, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vit.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let mut rng = RngState::new(1);
        let x = random_batch(&mut rng, vec![2, 8, 8, 1]);
        let a = model.forward_eval(&x).unwrap();
        let b = loaded.forward_eval(&x).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let model = trained_head();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::Format(ref m) if m.contains("magic")));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let model = trained_head();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 13]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::Format(ref m) if m.contains("unexpected end")));
    }

    #[test]
    fn wrong_record_count_is_rejected() {
        let model = trained_head();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("count.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // The record count sits right after magic, version, and config.
        let config_len =
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count_at = 12 + config_len;
        let count = u32::from_le_bytes(bytes[count_at..count_at + 4].try_into().unwrap());
        bytes[count_at..count_at + 4].copy_from_slice(&(count + 1).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::Format(ref m) if m.contains("record count")));
    }

    #[test]
    fn missing_file_reports_io_error() {
        let err = load_checkpoint(Path::new("/nonexistent/x.ckpt")).unwrap_err();
        assert!(matches!(err, CheckpointError::Io(_)));
    }
}
