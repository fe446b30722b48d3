//! Run manifests: what went into a run and what came out.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use aoa_core::{Error, Result};

/// One hashed input file under a location-independent name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub name: String,
    pub sha256: String,
}

/// Written as `manifest.json` next to the outputs of a training run. Holds
/// everything needed to repeat the run: the full configuration, the phase,
/// and content hashes of every input file. Paths are relative to the output
/// directory and no timestamps are recorded, so reruns produce identical
/// manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub phase: String,
    /// The complete configuration in file syntax, defaults included.
    pub config: String,
    pub seed: u64,
    /// `synthetic` or `files`.
    pub data_source: String,
    pub inputs: Vec<InputHash>,
    /// Hash over the sorted `(name, sha256)` list.
    pub input_hash: String,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Git's object hash construction over SHA-256: `blob <len>\0<content>`.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

pub fn hash_file(name: impl Into<String>, path: &Path) -> Result<InputHash> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputHash {
        name: name.into(),
        sha256: blob_hash(&bytes),
    })
}

/// Combined hash, independent of the order inputs were listed in.
pub fn combined_hash(inputs: &[InputHash]) -> String {
    let mut sorted: Vec<&InputHash> = inputs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut h = Sha256::new();
    for i in sorted {
        h.update(format!("{} {}\n", i.sha256, i.name).as_bytes());
    }
    hex::encode(h.finalize())
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_construction() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            blob_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
        assert_eq!(blob_hash(b"").len(), 64);
    }

    #[test]
    fn combined_hash_ignores_listing_order() {
        let a = InputHash { name: "a".into(), sha256: blob_hash(b"1") };
        let b = InputHash { name: "b".into(), sha256: blob_hash(b"2") };
        assert_eq!(combined_hash(&[a.clone(), b.clone()]), combined_hash(&[b.clone(), a.clone()]));
        let b2 = InputHash { name: "b".into(), sha256: blob_hash(b"3") };
        assert_ne!(combined_hash(&[a.clone(), b]), combined_hash(&[a, b2]));
    }
}
