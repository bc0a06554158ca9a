//! Run manifests: the argument vector of a run plus content hashes of its
//! inputs and outputs, written next to the outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path) -> Result<FileHash> {
        Ok(FileHash {
            path: path.to_path_buf(),
            sha256: hash_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Arguments after the program name.
    pub command: Vec<String>,
    pub config: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// SHA-256 over the input hashes in order.
    pub inputs_hash: String,
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

impl RunManifest {
    pub fn new(
        command: Vec<String>,
        config: Option<PathBuf>,
        seeds: Vec<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<RunManifest> {
        let inputs = inputs.iter().map(|p| FileHash::of(p)).collect::<Result<Vec<_>>>()?;
        let outputs = outputs.iter().map(|p| FileHash::of(p)).collect::<Result<Vec<_>>>()?;
        let mut h = Sha256::new();
        for i in &inputs {
            h.update(i.sha256.as_bytes());
        }
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config,
            seeds,
            inputs,
            outputs,
            inputs_hash: hex::encode(h.finalize()),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fails unless every input still has its recorded hash.
    pub fn check_inputs(&self) -> Result<()> {
        for i in &self.inputs {
            let now = hash_file(&i.path)?;
            if now != i.sha256 {
                bail!(
                    "input {} changed since the run (hash {now}, recorded {})",
                    i.path.display(),
                    i.sha256
                );
            }
        }
        Ok(())
    }

    /// Outputs whose current hash differs from the recorded one.
    pub fn changed_outputs(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for o in &self.outputs {
            if hash_file(&o.path)? != o.sha256 {
                out.push(o.path.clone());
            }
        }
        Ok(out)
    }
}
