use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use promoguard::digest::sha256_hex;
use serde::Serialize;
use serde_json::Value;

use crate::exit::CliResult;

/// Written next to the outputs of every run that produces files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub command: String,
    /// Endpoint, prompt and dataset settings after resolving names.
    pub resolved: BTreeMap<String, Value>,
    /// SHA-256 per input.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub versions: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command_line: std::env::args().collect(),
            command: command.to_string(),
            resolved: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            versions: BTreeMap::from([(
                "promoguard".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            )]),
            started_at: now(),
            finished_at: String::new(),
        }
    }

    pub fn resolved(&mut self, key: &str, value: impl Serialize) {
        self.resolved.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn input_hash(&mut self, key: &str, hash: impl Into<String>) {
        self.inputs.insert(key.to_string(), hash.into());
    }

    /// Records the SHA-256 of a file's bytes.
    pub fn input_file(&mut self, key: &str, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|e| {
            crate::exit::input_error(format!("cannot read {}: {e}", path.display()))
        })?;
        self.input_hash(key, sha256_hex(bytes));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(mut self, dir: &Path, file_name: &str) -> CliResult<PathBuf> {
        self.finished_at = now();
        std::fs::create_dir_all(dir)?;
        let path = dir.join(file_name);
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes") + "\n";
        std::fs::write(&path, body)?;
        Ok(path)
    }
}
