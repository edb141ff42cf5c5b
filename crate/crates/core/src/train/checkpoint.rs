//! Checkpoint persistence.
//!
//! Binary layout: magic `"ASGR"`, little-endian `u32` format version (1),
//! little-endian `u64` header length, a UTF-8 JSON header (configs,
//! vocabulary hashes, class labels, history, parameter manifest), then the
//! parameter payload — each manifest entry's values as little-endian 64-bit
//! floats, concatenated in manifest order. Saving the same state twice
//! produces byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Vocabulary;
use crate::model::{ModelConfig, ModelParameters};
use crate::numerics::ParameterStore;
use crate::scalar::Scalar;

use super::{EpochStats, TrainConfig};

/// File magic.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ASGR";
/// Current format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// One parameter's entry in the checkpoint manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset of this entry's values within the payload.
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model: ModelConfig,
    train: TrainConfig,
    object_vocab_hash: String,
    relation_vocab_hash: String,
    class_labels: Vec<String>,
    history: Vec<EpochStats>,
    best_epoch: usize,
    manifest: Vec<ManifestEntry>,
}

/// A trained model's full state: configuration, provenance, history, and
/// parameters.
#[derive(Clone, Debug)]
pub struct Checkpoint<S> {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub object_vocab_hash: String,
    pub relation_vocab_hash: String,
    pub class_labels: Vec<String>,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose parameters this checkpoint holds.
    pub best_epoch: usize,
    pub store: ParameterStore<S>,
}

impl<S: Scalar> Checkpoint<S> {
    /// Errors unless the checkpoint's vocabulary hashes match `vocab`. With
    /// `allow_mismatch` the mismatch degrades to a warning.
    pub fn verify_vocabulary(&self, vocab: &Vocabulary, allow_mismatch: bool) -> Result<()> {
        let checks = [
            ("object", &self.object_vocab_hash, vocab.object_hash()),
            ("relation", &self.relation_vocab_hash, vocab.relation_hash()),
        ];
        for (which, stored, current) in checks {
            if stored != current {
                if allow_mismatch {
                    log::warn!(
                        "{which} vocabulary hash mismatch (checkpoint {stored}, current {current}); proceeding on override"
                    );
                } else {
                    return Err(Error::VocabMismatch {
                        which,
                        expected: stored.clone(),
                        got: current.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn checkpoint_error(message: impl Into<String>) -> Error {
    Error::Checkpoint {
        message: message.into(),
    }
}

/// Writes `ckpt` to `path` in the binary checkpoint format.
pub fn save_checkpoint<S: Scalar>(ckpt: &Checkpoint<S>, path: &Path) -> Result<()> {
    let mut manifest = Vec::with_capacity(ckpt.store.len());
    let mut offset = 0u64;
    for param in ckpt.store.iter() {
        let (rows, cols) = param.value.shape();
        manifest.push(ManifestEntry {
            name: param.name.clone(),
            rows,
            cols,
            offset,
        });
        offset += (rows * cols * 8) as u64;
    }
    let header = CheckpointHeader {
        model: ckpt.model_config.clone(),
        train: ckpt.train_config.clone(),
        object_vocab_hash: ckpt.object_vocab_hash.clone(),
        relation_vocab_hash: ckpt.relation_vocab_hash.clone(),
        class_labels: ckpt.class_labels.clone(),
        history: ckpt.history.clone(),
        best_epoch: ckpt.best_epoch,
        manifest,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| checkpoint_error(format!("header serialization: {e}")))?;

    let mut buf =
        Vec::with_capacity(16 + header_bytes.len() + offset as usize);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for param in ckpt.store.iter() {
        for &v in param.value.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a checkpoint back, restoring parameters bit-identically.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 16 {
        return Err(checkpoint_error("file too short for checkpoint header"));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(checkpoint_error("bad magic: not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(checkpoint_error(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload_start = 16usize
        .checked_add(header_len)
        .ok_or_else(|| checkpoint_error("header length overflows"))?;
    if bytes.len() < payload_start {
        return Err(checkpoint_error("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..payload_start])
        .map_err(|e| checkpoint_error(format!("header parse: {e}")))?;

    let payload = &bytes[payload_start..];
    let mut expected_offset = 0u64;
    let mut store: ParameterStore<S> = ParameterStore::new();
    for entry in &header.manifest {
        if entry.offset != expected_offset {
            return Err(checkpoint_error(format!(
                "manifest offset mismatch at {} (expected {expected_offset}, got {})",
                entry.name, entry.offset
            )));
        }
        let count = entry.rows * entry.cols;
        let start = entry.offset as usize;
        let end = start + count * 8;
        if payload.len() < end {
            return Err(checkpoint_error(format!(
                "payload truncated at {} (need {end} bytes, have {})",
                entry.name,
                payload.len()
            )));
        }
        let values: Vec<S> = payload[start..end]
            .chunks_exact(8)
            .map(|c| S::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let matrix = crate::numerics::Matrix::from_vec(entry.rows, entry.cols, values)?;
        store.add(&entry.name, matrix)?;
        expected_offset = end as u64;
    }
    if payload.len() as u64 != expected_offset {
        return Err(checkpoint_error(format!(
            "payload length {} does not match manifest total {expected_offset}",
            payload.len()
        )));
    }

    // The manifest must lay out exactly the parameters the model config
    // declares; this also catches header/payload tampering.
    let verified = ModelParameters::from_store(&header.model, store)?;

    Ok(Checkpoint {
        model_config: header.model,
        train_config: header.train,
        object_vocab_hash: header.object_vocab_hash,
        relation_vocab_hash: header.relation_vocab_hash,
        class_labels: header.class_labels,
        history: header.history,
        best_epoch: header.best_epoch,
        store: verified.into_store(),
    })
}
