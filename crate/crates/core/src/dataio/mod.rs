//! Embedding datasets: the in-memory record type, the `DSE1` binary format,
//! CSV import, subject-wise splitting and the synthetic generator.

mod csv_import;
mod dse;
mod split;
mod synth;

use std::collections::BTreeSet;

use thiserror::Error;

pub use csv_import::{import_csv, parse_csv};
pub use dse::{decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, EMBED_MAGIC, EMBED_VERSION};
pub use split::split_by_subject;
pub use synth::{class_pairs, synth_generate, SynthConfig};

use crate::netcore::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("bad magic at byte 0")]
    BadMagic,
    #[error("unsupported version {found} at byte {offset}")]
    Version { found: u32, offset: usize },
    #[error("truncated file: needed {needed} bytes at byte {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{field} {value} out of range at byte {offset}")]
    LabelOutOfRange {
        field: &'static str,
        value: u8,
        offset: usize,
    },
    #[error("labels coincide (true = disguised = {label}) at byte {offset}")]
    LabelsCoincide { label: u8, offset: usize },
    #[error("unknown frame type {value} at byte {offset}")]
    FrameType { value: u8, offset: usize },
    #[error("non-zero padding at byte {offset}")]
    Padding { offset: usize },
    #[error("invalid header at byte {offset}: {reason}")]
    Header { offset: usize, reason: String },
    #[error("{0} trailing bytes after last record")]
    Trailing(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {index}: {reason}")]
    Record { index: usize, reason: String },
    #[error("csv row {row}: {reason}")]
    Csv { row: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Onset,
    Apex,
}

impl FrameType {
    pub fn code(self) -> u8 {
        match self {
            FrameType::Onset => 0,
            FrameType::Apex => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FrameType::Onset),
            1 => Some(FrameType::Apex),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Onset => "onset",
            FrameType::Apex => "apex",
        }
    }
}

impl std::str::FromStr for FrameType {
    type Err = String;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "onset" => Ok(FrameType::Onset),
            "apex" => Ok(FrameType::Apex),
            other => Err(format!("unknown frame type {other:?}")),
        }
    }
}

/// One sample: a backbone embedding with its subject and both emotion labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub subject_id: u16,
    pub true_label: u8,
    pub disguised_label: u8,
    pub frame_type: FrameType,
    pub embedding: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("true_label", self.true_label), ("disguised_label", self.disguised_label)] {
            if v as usize >= NUM_CLASSES {
                return Err(format!("{name} {v} out of range"));
            }
        }
        if self.true_label == self.disguised_label {
            return Err(format!("labels coincide ({})", self.true_label));
        }
        Ok(())
    }
}

/// Records sharing one embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d_emb: usize,
    pub records: Vec<EmbeddingRecord>,
}

impl Dataset {
    pub fn new(d_emb: usize, records: Vec<EmbeddingRecord>) -> Result<Self, DataError> {
        let ds = Self { d_emb, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.d_emb == 0 {
            return Err(DataError::Header {
                offset: 12,
                reason: "embedding width must be ≥ 1".into(),
            });
        }
        for (index, r) in self.records.iter().enumerate() {
            r.validate().map_err(|reason| DataError::Record { index, reason })?;
            if r.embedding.len() != self.d_emb {
                return Err(DataError::Record {
                    index,
                    reason: format!("embedding width {} ≠ {}", r.embedding.len(), self.d_emb),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct subject ids, ascending.
    pub fn subjects(&self) -> Vec<u16> {
        self.records
            .iter()
            .map(|r| r.subject_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            d_emb: self.d_emb,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}
