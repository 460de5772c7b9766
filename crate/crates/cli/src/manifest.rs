//! Machine-readable run manifest: per-stage wall-clock times, solver
//! iteration counts and written files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    pub iterations: BTreeMap<String, usize>,
    pub values: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
}

impl StageRecord {
    pub fn iterations(&mut self, key: &str, n: usize) {
        self.iterations.insert(key.to_string(), n);
    }

    pub fn value(&mut self, key: &str, v: impl Into<Value>) {
        self.values.insert(key.to_string(), v.into());
    }

    pub fn output(&mut self, rel: impl Into<String>) {
        self.outputs.push(rel.into());
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub workers: usize,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// Existing manifest in `dir`, or an empty one.
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(CliError::io(&path))
    }
}
