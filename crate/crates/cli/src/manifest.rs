use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dkto_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written as `manifest.json` in its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// SHA-256 of the TOML form of `config`.
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub inputs: BTreeMap<String, PathBuf>,
    /// Files written by the run, keyed by role and relative to the manifest's
    /// directory. Only files that exist are listed.
    pub outputs: BTreeMap<String, PathBuf>,
    pub metrics: BTreeMap<String, f64>,
    pub status: RunStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            config_hash: config.hash(),
            started: now(),
            finished: String::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
            status: RunStatus::Ok,
            error: None,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.insert(role.into(), path.to_path_buf());
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.insert(role.into(), path.to_path_buf());
    }

    /// Stamps the end time and status, drops outputs that were never written, and
    /// saves the manifest into `dir`.
    pub fn finish(mut self, dir: &Path, error: Option<&Error>) -> Result<PathBuf> {
        self.finished = now();
        if let Some(e) = error {
            self.status = RunStatus::Failed;
            self.error = Some(e.to_string());
        }
        self.outputs.retain(|_, p| p.exists());
        for p in self.outputs.values_mut() {
            if let Ok(rel) = p.strip_prefix(dir) {
                *p = rel.to_path_buf();
            }
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: Some(path.to_path_buf()),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    /// Whether the stored hash matches the stored config.
    pub fn hash_matches(&self) -> bool {
        self.config.hash() == self.config_hash
    }
}
