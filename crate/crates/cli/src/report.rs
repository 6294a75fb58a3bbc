use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

/// JSON record written by every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub config_fingerprint: String,
    /// Fingerprints of the inputs and outputs involved (corpus, labels, spec, model).
    pub fingerprints: BTreeMap<String, String>,
    /// Seconds per phase, plus `total`.
    pub timings: BTreeMap<String, f64>,
    pub result: serde_json::Value,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            config_fingerprint: config.fingerprint(),
            fingerprints: BTreeMap::new(),
            timings: BTreeMap::new(),
            result: serde_json::Value::Null,
        }
    }

    pub fn fingerprint(&mut self, name: &str, value: impl Into<String>) {
        self.fingerprints.insert(name.to_string(), value.into());
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.timings.insert(name.to_string(), seconds);
    }

    pub fn set_result<T: Serialize>(&mut self, result: &T) -> Result<(), CliError> {
        self.result = serde_json::to_value(result).map_err(|e| CliError::Data(e.to_string()))?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        }
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
