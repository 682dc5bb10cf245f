//! Sidecar manifests written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thememiner::pipeline::prompts::sha256_hex;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// sha256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub parameters: Value,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, parameters: Value) -> Self {
        Manifest {
            tool: "thememiner",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            parameters,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(CliError::at("hash inputs", path))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<dir>/manifest.json`, or `<file>.manifest.json` for a file.
    pub fn write_beside(&self, target: &Path) -> Result<PathBuf, CliError> {
        let path = if target.is_dir() {
            target.join("manifest.json")
        } else {
            let mut name = target.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            target.with_file_name(name)
        };
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(CliError::at("write manifest", &path))?;
        Ok(path)
    }
}
