//! Run manifests: enough to reproduce a run, and nothing that varies
//! between identical runs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    #[serde(flatten)]
    pub details: T,
    /// SHA-256 of every artifact, keyed by path relative to the output dir.
    pub outputs: BTreeMap<String, String>,
}

/// Writes `contents` under `dir` and records its digest.
pub fn write_artifact(dir: &Path, rel: &str, contents: &[u8], outputs: &mut BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    outputs.insert(rel.to_string(), hex::encode(Sha256::digest(contents)));
    Ok(())
}

pub fn write_manifest<T: Serialize>(dir: &Path, manifest: &Manifest<T>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    let path = dir.join("manifest.json");
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}
