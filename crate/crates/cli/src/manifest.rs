//! Run manifest written next to every command's outputs.

use std::path::Path;

use lpr_core::dynamics::Mode;
use lpr_core::systems::SystemConfig;
use lpr_core::verify::{Criterion, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub mode: Option<Mode>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub tol_scale: f64,
    /// Empty means every check.
    pub checks: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckStatus {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    /// Effective configuration, including the initial state actually used.
    pub config: SystemConfig,
    pub seed: Option<u64>,
    pub settings: RunSettings,
    pub tolerances: Tolerances,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub checks: Vec<CheckStatus>,
    pub passed: bool,
    /// Set when the run stopped on an error.
    pub error: Option<String>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(src: &str) -> CliResult<Self> {
        serde_json::from_str(src).map_err(|e| CliError::Usage(format!("invalid manifest: {e}")))
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()? + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let src = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Self::from_json(&src)
    }
}
