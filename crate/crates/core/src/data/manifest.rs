//! Sample manifests and their CSV form.
//!
//! A manifest is the unit the rest of the pipeline works from: an ordered
//! list of records plus a dense label vocabulary. The CSV layout is
//! `id,source,label,masked` with `masked` spelled `true` or `false`.

use std::collections::HashMap;
use std::path::Path;

use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub source: String,
    pub label: String,
    pub masked: bool,
}

/// Ordered records plus the label vocabulary mapping labels to dense class
/// indices `0..K-1` in first-appearance order.
///
/// Splitting hands the full parent vocabulary to both halves, so a class
/// index means the same thing in train and test even when a label is absent
/// from one side.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    records: Vec<SampleRecord>,
    vocab: Vec<String>,
}

fn first_appearance_vocab(records: &[SampleRecord]) -> Vec<String> {
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut vocab = Vec::new();
    for r in records {
        if seen.insert(&r.label, ()).is_none() {
            vocab.push(r.label.clone());
        }
    }
    vocab
}

impl DatasetManifest {
    pub fn from_records(records: Vec<SampleRecord>) -> Result<Self, DataError> {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for r in &records {
            if seen.insert(&r.id, ()).is_some() {
                return Err(DataError::InvalidConfig(format!(
                    "duplicate id {:?} in manifest records",
                    r.id
                )));
            }
        }
        let vocab = first_appearance_vocab(&records);
        Ok(DatasetManifest { records, vocab })
    }

    /// Invariant: every record's label must be present in `vocab`.
    pub(crate) fn with_vocab(records: Vec<SampleRecord>, vocab: Vec<String>) -> Self {
        debug_assert!(records.iter().all(|r| vocab.contains(&r.label)));
        DatasetManifest { records, vocab }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn num_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.vocab.iter().position(|l| l == label)
    }

    /// Per-record class indices, in record order.
    pub fn label_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| {
                self.class_index(&r.label)
                    .expect("manifest invariant: every label is in the vocabulary")
            })
            .collect()
    }
}

const HEADER: [&str; 4] = ["id", "source", "label", "masked"];

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => DataError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;

    let headers = reader.headers().map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header id,source,label,masked, got {headers:?}"),
        });
    }

    let mut records = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        if row.len() != HEADER.len() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, got {}", HEADER.len(), row.len()),
            });
        }
        let id = row[0].to_string();
        let masked = match &row[3] {
            "true" => true,
            "false" => false,
            other => {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("masked must be true or false, got {other:?}"),
                })
            }
        };
        if seen.insert(id.clone(), ()).is_some() {
            return Err(DataError::DuplicateId {
                path: path.to_path_buf(),
                id,
                line,
            });
        }
        records.push(SampleRecord {
            id,
            source: row[1].to_string(),
            label: row[2].to_string(),
            masked,
        });
    }

    let vocab = first_appearance_vocab(&records);
    Ok(DatasetManifest { records, vocab })
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => DataError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    })?;
    writer.write_record(HEADER).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    for r in &manifest.records {
        writer
            .write_record([
                r.id.as_str(),
                r.source.as_str(),
                r.label.as_str(),
                if r.masked { "true" } else { "false" },
            ])
            .map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}
