//! Reproducibility manifest written next to every set of artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// Extra hashes, such as the synthetic generator spec.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name to its sha256, with the command that wrote it.
    pub artifacts: BTreeMap<String, Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub command: String,
    pub sha256: String,
}

impl Manifest {
    pub fn new(config_sha256: String, seed: Option<u64>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256,
            seed,
            ..Self::default()
        }
    }

    /// Existing manifest of `dir` if it was written under the same config,
    /// so commands that add artifacts one at a time keep the others.
    pub fn open(dir: &Path, config_sha256: String, seed: Option<u64>) -> Self {
        let fresh = Self::new(config_sha256, seed);
        match std::fs::read(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice::<Manifest>(&b).ok())
        {
            Some(m) if m.config_sha256 == fresh.config_sha256 && m.seed == seed => m,
            _ => fresh,
        }
    }

    /// Hashes `files` (relative to `dir`) and records them.
    pub fn record(&mut self, dir: &Path, command: &str, files: &[String]) -> Result<(), CliError> {
        for f in files {
            let bytes = std::fs::read(dir.join(f)).map_err(|e| CliError::io(dir.join(f), e))?;
            self.artifacts.insert(
                f.clone(),
                Artifact {
                    command: command.into(),
                    sha256: sha256_hex(&bytes),
                },
            );
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::io(path, e))
    }
}
