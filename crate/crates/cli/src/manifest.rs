use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Record of one command invocation with every option resolved, written next
/// to the command's outputs. No timestamps or host details are stored, so a
/// replay rewrites the manifest byte for byte as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub args: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<A: Serialize>(command: &str, seed: Option<u64>, args: &A) -> Result<Self, CliError> {
        Ok(Self {
            tool: "layerlens".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            args: serde_json::to_value(args)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
