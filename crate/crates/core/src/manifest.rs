//! Per-run provenance record written next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    /// Every input that affects the data outputs.
    pub config: Value,
    pub outputs: Vec<String>,
}

pub fn config_hash(config: &Value) -> String {
    // serde_json maps are sorted, so the encoding is canonical.
    hex::encode(Sha256::digest(config.to_string()))
}

/// SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl RunManifest {
    pub fn new(version: &str, command: &str, seed: u64, config: Value, outputs: Vec<String>) -> Self {
        RunManifest {
            version: version.into(),
            command: command.into(),
            seed,
            config_hash: config_hash(&config),
            config,
            outputs,
        }
    }

    /// `<command>.manifest.json`, so commands sharing a directory keep
    /// their own records.
    pub fn file_name(&self) -> String {
        format!("{}.manifest.json", self.command)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
