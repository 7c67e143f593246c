//! The run manifest written next to every artifact.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use veclm::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "veclm-run/1";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format_version: &'static str,
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub deterministic: bool,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
    /// The only field that differs between identical runs.
    pub created_unix: u64,
}

/// SHA-256 of a file, or of every file in a directory in name order.
pub fn digest(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && !p.to_string_lossy().ends_with(".manifest.json"))
            .collect();
        entries.sort();
        for p in entries {
            h.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            h.update(digest(&p)?);
        }
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        h.update(bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn digests(paths: &[&Path]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.to_path_buf(),
                sha256: digest(p)?,
            })
        })
        .collect()
}

/// `<artifact>.manifest.json`, or `run.manifest.json` inside a directory.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join("run.manifest.json")
    } else {
        let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }
}

impl RunManifest {
    pub fn write(&self, artifact: &Path) -> Result<PathBuf> {
        let path = manifest_path(artifact);
        let json = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, json).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}
