//! Backbone embedding files and a synthetic stand-in generator.
//!
//! Embeddings arrive as CSV with header `id,label,v0..v{d-1}`; every row in a
//! file shares the dimensionality d and all values are finite.

use std::path::Path;

use crate::rng::RngState;
use crate::tensor::Tensor;

use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: String,
    pub vector: Vec<f64>,
}

fn parse_err(path: &Path, line: u64, message: String) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io {
                path: path.to_path_buf(),
                source: io,
            },
            other => parse_err(path, 0, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(parse_err(
            path,
            1,
            format!("expected header id,label,v0..v{{d-1}}, got {headers:?}"),
        ));
    }
    let dim = headers.len() - 2;
    for (i, name) in headers.iter().skip(2).enumerate() {
        if name != format!("v{i}") {
            return Err(parse_err(
                path,
                1,
                format!("expected column v{i}, got {name:?}"),
            ));
        }
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != dim + 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} values, got {}", dim, row.len().saturating_sub(2)),
            ));
        }
        let id = row[0].to_string();
        let mut vector = Vec::with_capacity(dim);
        for (i, field) in row.iter().skip(2).enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                parse_err(path, line, format!("column v{i}: not a number: {field:?}"))
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    path: path.to_path_buf(),
                    id,
                    line,
                });
            }
            vector.push(value);
        }
        records.push(EmbeddingRecord {
            id,
            label: row[1].to_string(),
            vector,
        });
    }
    Ok(records)
}

pub fn save_embeddings(records: &[EmbeddingRecord], path: &Path) -> Result<(), DataError> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    if records.iter().any(|r| r.vector.len() != dim) {
        return Err(DataError::InvalidConfig(
            "all embedding vectors must share one dimensionality".into(),
        ));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io {
            path: path.to_path_buf(),
            source: io,
        },
        other => parse_err(path, 0, format!("{other:?}")),
    })?;

    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    let write_err = |e: csv::Error| parse_err(path, 0, e.to_string());
    writer.write_record(&header).map_err(write_err)?;
    for r in records {
        let mut row = vec![r.id.clone(), r.label.clone()];
        // Display prints the shortest string that parses back to the same f64,
        // so save/load roundtrips are bit-exact.
        row.extend(r.vector.iter().map(|v| format!("{v}")));
        writer.write_record(&row).map_err(write_err)?;
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Class means are random unit vectors scaled by `separation`; samples add
/// isotropic Gaussian noise of width `noise`. Records come out class-major:
/// all of class 0, then class 1, and so on.
pub fn synth_embeddings(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    noise: f64,
    rng: &mut RngState,
) -> Vec<EmbeddingRecord> {
    assert!(classes >= 2, "need at least two classes, got {classes}");
    assert!(per_class >= 1, "need at least one sample per class");
    assert!(dim >= 1, "need at least one dimension");
    assert!(separation > 0.0, "separation must be positive");
    assert!(noise >= 0.0, "noise must be non-negative");

    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut v = vec![0.0; dim];
        rng.fill_gaussian(&mut v);
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        assert!(norm > 0.0, "degenerate direction draw");
        for x in &mut v {
            *x *= separation / norm;
        }
        means.push(v);
    }

    let mut records = Vec::with_capacity(classes * per_class);
    for (k, mean) in means.iter().enumerate() {
        for j in 0..per_class {
            let mut vector = vec![0.0; dim];
            rng.fill_gaussian(&mut vector);
            for (v, m) in vector.iter_mut().zip(mean) {
                *v = m + noise * *v;
            }
            records.push(EmbeddingRecord {
                id: format!("c{k:02}_s{j:03}"),
                label: format!("c{k:02}"),
                vector,
            });
        }
    }
    records
}

/// Turns records into per-example tensors plus dense class indices.
///
/// The vocabulary is built in first-appearance order, matching manifests.
pub fn embedding_examples(
    records: &[EmbeddingRecord],
) -> Result<(Vec<Tensor>, Vec<usize>, Vec<String>), DataError> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut vocab: Vec<String> = Vec::new();
    let mut examples = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        if r.vector.len() != dim {
            return Err(DataError::InvalidConfig(format!(
                "record {:?} has dimension {}, expected {}",
                r.id,
                r.vector.len(),
                dim
            )));
        }
        let index = match vocab.iter().position(|l| l == &r.label) {
            Some(i) => i,
            None => {
                vocab.push(r.label.clone());
                vocab.len() - 1
            }
        };
        labels.push(index);
        examples.push(Tensor::new(vec![dim], r.vector.clone()));
    }
    Ok((examples, labels, vocab))
}
