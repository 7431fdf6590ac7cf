//! `manifest.json`: what each stage of a run read, wrote and took.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: Status,
    /// Hash of the stage's parameters.
    pub params: String,
    /// Content hash per file, keyed by path relative to the output dir when
    /// the file lies inside it.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
}

impl Manifest {
    pub fn new(seed: u64) -> Self {
        Self {
            version: format!("rooffit {}", env!("CARGO_PKG_VERSION")),
            seed,
            stages: Vec::new(),
            failed_stage: None,
        }
    }

    pub fn read(dir: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_NAME)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Manifest key for a path: relative to `root` when inside it.
pub fn key_of(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub fn resolve(key: &str, root: &Path) -> PathBuf {
    let p = Path::new(key);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

pub fn hash_files(paths: &[PathBuf], root: &Path) -> Result<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((key_of(p, root), hash_file(p)?))).collect()
}

/// True when every recorded file still exists with the recorded content.
pub fn files_match(files: &BTreeMap<String, String>, root: &Path) -> bool {
    files
        .iter()
        .all(|(k, h)| hash_file(&resolve(k, root)).is_ok_and(|now| &now == h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trip_and_match() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        std::fs::write(&f, "one").unwrap();
        let mut m = Manifest::new(3);
        let files = hash_files(&[f.clone()], dir.path()).unwrap();
        assert_eq!(files.keys().next().unwrap(), "a.txt");
        m.stages.push(StageRecord {
            name: "x".into(),
            status: Status::Ok,
            params: "p".into(),
            inputs: BTreeMap::new(),
            outputs: files.clone(),
            seconds: 0.5,
            error: None,
        });
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
        assert!(files_match(&files, dir.path()));
        std::fs::write(&f, "two").unwrap();
        assert!(!files_match(&files, dir.path()));
    }
}
