//! Per-command provenance record. Every command writes manifest-<cmd>.json
//! into the out directory with content digests of what it read and wrote plus
//! the fully resolved config. The creation time lives here and only here;
//! every other artifact is a pure function of config, inputs and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub created_unix: u64,
    pub seed: u64,
    /// The resolved config the run actually used, overrides applied.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
}

pub fn sha256_hex(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok((hex::encode(digest), bytes.len() as u64))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Result<Manifest> {
        let config = serde_json::to_value(cfg)
            .map_err(|e| Error::Config(format!("config not serializable: {e}")))?;
        let created_unix =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Manifest {
            command: command.to_string(),
            created_unix,
            seed: cfg.seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn record_input(&mut self, name: &str, path: &Path) -> Result<()> {
        let (sha256, bytes) = sha256_hex(path)?;
        self.inputs.insert(
            name.to_string(),
            FileDigest { path: path.display().to_string(), sha256, bytes },
        );
        Ok(())
    }

    pub fn record_output(&mut self, name: &str, path: &Path) -> Result<()> {
        let (sha256, bytes) = sha256_hex(path)?;
        self.outputs.insert(
            name.to_string(),
            FileDigest { path: path.display().to_string(), sha256, bytes },
        );
        Ok(())
    }

    /// Writes manifest-<command>.json under `out_dir` and returns the path.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(format!("manifest-{}.json", self.command));
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Input(format!("manifest: {e}")))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
