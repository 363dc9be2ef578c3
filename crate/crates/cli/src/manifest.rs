//! Run manifests: everything needed to reproduce a run bit-exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: u64,
    /// Fully resolved command parameters (defaults materialized).
    pub params: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, params: serde_json::Value, inputs: Vec<PathBuf>) -> Self {
        Self {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            params,
            inputs,
            outputs: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
        }
    }

    pub fn record_output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn finish_and_save(mut self, path: &Path) -> Result<(), CliError> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::io(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid manifest {}: {e}", path.display())))
    }
}
