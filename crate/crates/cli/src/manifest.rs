//! Run manifests written next to every primary artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name; `rerun` replays exactly these.
    pub argv: Vec<String>,
    pub config: Config,
    pub seed: u64,
    /// Path → SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// Path → SHA-256 of every primary artifact written.
    pub outputs: BTreeMap<String, String>,
    /// Checkpoint, vocabulary and threshold digests involved in the run.
    pub digests: BTreeMap<String, String>,
    /// Free-form facts about the run (counts, dropped lines, ...).
    pub notes: BTreeMap<String, serde_json::Value>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// `scores.tsv` → `scores.tsv.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, config: Config) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            seed: config.seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            digests: BTreeMap::new(),
            notes: BTreeMap::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn write(&mut self, primary: &Path) -> Result<PathBuf, CliError> {
        self.finished_unix_ms = now_ms();
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::new("Format", e.to_string()))
    }
}
