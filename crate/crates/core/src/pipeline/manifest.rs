use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::files::read_json;
use crate::error::{Error, Result};
use crate::eval::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "swvmd-run/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub train_baseline: u64,
    pub train_swvmd: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    /// Hash of the input file, when it was readable.
    pub input_sha256: Option<String>,
    /// Every file in the run directory except the manifest, keyed by
    /// `/`-separated relative path.
    pub artifacts: BTreeMap<String, Artifact>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("{}: unsupported manifest format {:?}", path.display(), m.format)));
        }
        Ok(m)
    }

    /// Paths whose hashes differ or that exist on one side only.
    pub fn artifact_differences(&self, other: &Manifest) -> Vec<String> {
        let mut keys: Vec<&String> = self.artifacts.keys().chain(other.artifacts.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| self.artifacts.get(*k) != other.artifacts.get(*k))
            .cloned()
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<Artifact> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Artifact { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join(MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn hash_artifacts(dir: &Path) -> Result<BTreeMap<String, Artifact>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).expect("under run dir");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((key, hash_file(&p)?))
        })
        .collect()
}

/// Hashes the run directory and writes `manifest.json` into it.
pub fn write_manifest(config: &RunConfig) -> Result<Manifest> {
    let config = config.effective();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seeds: Seeds { run: config.seed, train_baseline: config.train.seed, train_swvmd: config.train.seed },
        input_sha256: hash_file(&config.input).ok().map(|a| a.sha256),
        artifacts: hash_artifacts(&config.output_dir)?,
        config,
    };
    write_json(&manifest, &manifest.config.output_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
