//! Deterministic artifact persistence: an experiment produces a set of
//! relative paths with byte content; writing the set emits every file plus
//! a manifest listing each file with its SHA-256 digest.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Artifact files of one run, keyed by relative path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactSet {
    files: BTreeMap<String, Vec<u8>>,
}

impl ArtifactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        let path = path.into();
        assert!(
            self.files.insert(path.clone(), bytes.into()).is_none(),
            "duplicate artifact path {path}"
        );
    }

    pub fn add_text(&mut self, path: impl Into<String>, text: impl AsRef<str>) {
        self.add(path, text.as_ref().as_bytes().to_vec());
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable artifact");
        text.push('\n');
        self.add_text(path, text);
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(|v| v.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Manifest over the in-memory set (no I/O).
    pub fn manifest(&self) -> Manifest {
        Manifest {
            files: self
                .files
                .iter()
                .map(|(path, bytes)| ManifestEntry {
                    path: path.clone(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(bytes)),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Content listing of a run, sorted by path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

/// Write every artifact under `dir` plus `manifest.json`, and return the
/// manifest. Identical artifact sets produce byte-identical trees.
pub fn write_report(artifacts: &ArtifactSet, dir: &Path) -> io::Result<Manifest> {
    for (path, bytes) in &artifacts.files {
        let full = dir.join(path);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(full, bytes)?;
    }
    let manifest = artifacts.manifest();
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}
