//! Checkpoints: a JSON manifest listing every parameter by dotted name,
//! shape and byte offset, next to a contiguous little-endian `f32` blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatErrorKind, Result};
use crate::model::{CaptionModel, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

use super::vocab::Vocabulary;

pub const FORMAT: &str = "aoa-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub model: ModelConfig,
    pub vocab: Vocabulary,
    pub tensors: Vec<TensorEntry>,
}

/// Blob path paired with a manifest path (`x.json` → `x.bin`).
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(path: &Path, model: &CaptionModel, vocab: &Vocabulary) -> Result<()> {
    let mut blob = Vec::with_capacity(model.params.num_scalars() * 4);
    let mut tensors = Vec::with_capacity(model.params.len());
    for (_, name, t) in model.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let blob_file = blob_path(path);
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        blob: blob_file
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        model: model.config.clone(),
        vocab: vocab.clone(),
        tensors,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    std::fs::write(&blob_file, blob).map_err(|e| Error::io(&blob_file, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, kind: FormatErrorKind, offset: u64, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        kind,
        offset,
        detail: detail.into(),
    }
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| format_err(path, FormatErrorKind::Malformed, e.line() as u64, e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
        return Err(format_err(path, FormatErrorKind::BadMagic, 0, format!("expected format {FORMAT:?}")));
    }
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(VERSION as u64) {
        return Err(format_err(path, FormatErrorKind::BadVersion, 0, format!("version {version:?}")));
    }
    serde_json::from_value(value).map_err(|e| format_err(path, FormatErrorKind::Malformed, 0, e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<(CaptionModel, Vocabulary)> {
    let manifest = read_manifest(path)?;
    let blob_file = path.with_file_name(&manifest.blob);
    let blob = std::fs::read(&blob_file).map_err(|e| Error::io(&blob_file, e))?;

    if manifest.model.vocab_size != manifest.vocab.len() {
        return Err(Error::Config(format!(
            "{}: model vocabulary size {} differs from stored vocabulary of {}",
            path.display(),
            manifest.model.vocab_size,
            manifest.vocab.len()
        )));
    }
    let mut model = CaptionModel::new(manifest.model.clone())?;
    if manifest.tensors.len() != model.params.len() {
        return Err(format_err(
            path,
            FormatErrorKind::ShapeMismatch,
            0,
            format!("{} tensors listed, model has {}", manifest.tensors.len(), model.params.len()),
        ));
    }
    let mut loaded = ParamStore::new();
    let mut expected_offset = 0u64;
    for (entry, (_, name, template)) in manifest.tensors.iter().zip(model.params.iter()) {
        if entry.name != name || entry.shape != template.shape() {
            return Err(format_err(
                &blob_file,
                FormatErrorKind::ShapeMismatch,
                entry.offset,
                format!("{} {:?} does not match model tensor {name} {:?}", entry.name, entry.shape, template.shape()),
            ));
        }
        if entry.offset != expected_offset {
            return Err(format_err(
                &blob_file,
                FormatErrorKind::Malformed,
                entry.offset,
                format!("{} expected at offset {expected_offset}", entry.name),
            ));
        }
        let n = template.len() as u64 * 4;
        let end = entry.offset + n;
        if end > blob.len() as u64 {
            return Err(format_err(
                &blob_file,
                FormatErrorKind::Truncated,
                blob.len() as u64,
                format!("{} needs bytes up to {end}", entry.name),
            ));
        }
        let data = blob[entry.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        loaded.add(name, Tensor::new(entry.shape.clone(), data)?);
        expected_offset = end;
    }
    if expected_offset != blob.len() as u64 {
        return Err(format_err(
            &blob_file,
            FormatErrorKind::Malformed,
            expected_offset,
            format!("{} trailing bytes", blob.len() as u64 - expected_offset),
        ));
    }
    model.params.load_from(&loaded)?;
    Ok((model, manifest.vocab))
}
