//! Optional TOML defaults. Keys mirror the long flag names; a flag given on
//! the command line always wins.

use std::path::Path;

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub threads: Option<usize>,
    pub target: Option<String>,
    pub divergence: Option<String>,
    pub matrix: Option<String>,
    pub width_ratio: Option<f64>,
    pub shared_widths: Option<bool>,
    pub pair_widths: Option<bool>,
    pub permutations: Option<usize>,
    pub significance: Option<f64>,
    pub runs: Option<usize>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub k: Option<usize>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub cooldown: Option<usize>,
    pub tolerance: Option<usize>,
    pub useless_reps: Option<usize>,
    pub ratios: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
