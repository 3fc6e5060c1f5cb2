use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Provenance written next to a stage's primary output as `<output>.run.json`.
#[derive(Serialize)]
pub struct RunManifest {
    tool: &'static str,
    version: &'static str,
    stage: &'static str,
    parameters: Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn digest(path: &Path) -> CliResult<FileDigest> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::from(crackdet::Error::Io { path: path.to_path_buf(), source: e }))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

impl RunManifest {
    pub fn new(stage: &'static str, parameters: Value) -> Self {
        Self {
            tool: "crackdet",
            version: env!("CARGO_PKG_VERSION"),
            stage,
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> CliResult<Self> {
        self.inputs.push(digest(path)?);
        Ok(self)
    }

    pub fn output(mut self, path: &Path) -> CliResult<Self> {
        self.outputs.push(digest(path)?);
        Ok(self)
    }

    /// Writes the manifest beside the first output.
    pub fn write(self) -> CliResult<PathBuf> {
        let first = self.outputs.first().ok_or_else(|| CliError::contract("stage produced no output"))?;
        let path = PathBuf::from(format!("{}.run.json", first.path));
        let text = serde_json::to_string_pretty(&self)? + "\n";
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::from(crackdet::Error::Io { path: dir.to_path_buf(), source: e }))?;
    }
    std::fs::write(path, bytes).map_err(|e| crackdet::Error::Io { path: path.to_path_buf(), source: e }.into())
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| crackdet::Error::Io { path: path.to_path_buf(), source: e }.into())
}
