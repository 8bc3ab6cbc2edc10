use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{write_atomic, TOOL_VERSION};
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub resolved_config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub output_files: Vec<OutputFile>,
}

/// Collects outputs of one run, writes them and then the manifest.
pub(crate) struct RunOutputs {
    command: String,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<OutputFile>,
}

impl RunOutputs {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.outputs.push(OutputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn finish(self, manifest_path: &Path) -> Result<Manifest> {
        let manifest = Manifest {
            tool_version: TOOL_VERSION.into(),
            command: self.command,
            resolved_config: self.config,
            input_hashes: self.inputs,
            output_files: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        write_atomic(manifest_path, text.as_bytes())?;
        Ok(manifest)
    }
}

/// Where a command's primary output and manifest go. A path with an
/// extension is a file and gets `<file>.manifest.json`; anything else is a
/// directory holding `default_name` and `manifest.json`.
pub(crate) fn output_layout(output: &Path, default_name: &str) -> (PathBuf, PathBuf) {
    if output.extension().is_some() {
        let mut m = output.as_os_str().to_owned();
        m.push(".manifest.json");
        (output.to_path_buf(), PathBuf::from(m))
    } else {
        (output.join(default_name), output.join("manifest.json"))
    }
}
