//! Run manifests: a sidecar JSON record of what produced an output.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::io_util::{atomic_write, read_bytes};

/// What ran, on what, with which seed. Written next to every command's
/// outputs so a result can be traced back to its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub data_sha256: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed: None,
            config_sha256: None,
            data_sha256: BTreeMap::new(),
            wall_time_s: 0.0,
        }
    }

    /// Record an input file under its role name ("data", "locations", ...).
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let digest = file_sha256(path)?;
        self.data_sha256.insert(role.to_string(), digest);
        Ok(())
    }

    /// Stamp the elapsed time and write `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, started: Instant) -> Result<(), CliError> {
        self.wall_time_s = started.elapsed().as_secs_f64();
        let mut json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        json.push('\n');
        atomic_write(&dir.join("manifest.json"), json.as_bytes())
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    Ok(hex_digest(&read_bytes(path)?))
}

/// Hex SHA-256 of a byte slice.
pub fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
