//! Defaults loaded from a TOML file.
//!
//! The file is taken from `--config`, else from `$RICHNESS_CONFIG`. Values
//! given on the command line always win over the file.
//!
//! ```toml
//! format = "table"
//!
//! [procedure]
//! ladder_cap = [2, 2]
//! tridiagonal = false
//! stabilization_tol = 1e-3
//! max_outer_iterations = 20
//! classify_tol = 0.05
//! select_linear = false
//! max_iterations = 200
//!
//! [simulate]
//! seed = 7
//! serial = false
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

pub const CONFIG_ENV: &str = "RICHNESS_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<OutputFormat>,
    #[serde(default)]
    pub procedure: ProcedureSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcedureSection {
    pub ladder_cap: Option<(usize, usize)>,
    pub tridiagonal: Option<bool>,
    pub stabilization_tol: Option<f64>,
    pub max_outer_iterations: Option<usize>,
    pub classify_tol: Option<f64>,
    pub select_linear: Option<bool>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub seed: Option<u64>,
    pub serial: Option<bool>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolve the config path from the flag, then the environment.
    pub fn discover(flag: Option<&Path>) -> Result<Self, CliError> {
        let path = flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }
}
