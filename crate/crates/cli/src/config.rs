use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Defaults shared by every stage, read from `--config`. Command-line flags
/// take precedence over these values.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub bins: Option<usize>,
    pub r: Option<f64>,
    pub rbar: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub pair_moves: Option<usize>,
    pub threshold: Option<f64>,
    pub per_class: Option<usize>,
    pub radius: Option<usize>,
    pub clahe: Option<bool>,
    pub flatten_sigma: Option<f64>,
    pub remove_texture: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::from(crackdet::Error::Io { path: path.to_path_buf(), source: e }))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::bad_args(format!("config {}: {e}", path.display())))
    }
}
