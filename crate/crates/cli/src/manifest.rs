//! Run manifests: everything needed to repeat a command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const DETERMINISTIC_ENV: &str = "SEQDERAIN_DETERMINISTIC";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub tool_version: String,
    /// Fully resolved command configuration.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub deterministic: bool,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            format_version: MANIFEST_VERSION,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            deterministic: deterministic_mode(),
        })
    }

    pub fn input(mut self, key: &str, path: &Path) -> Self {
        self.inputs.insert(key.into(), path.to_path_buf());
        self
    }

    pub fn output(mut self, key: &str, path: &Path) -> Self {
        self.outputs.insert(key.into(), path.to_path_buf());
        self
    }

    pub fn seed(mut self, key: &str, seed: u64) -> Self {
        self.seeds.insert(key.into(), seed);
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            m.format_version == MANIFEST_VERSION,
            "{}: manifest format {} is not supported (expected {MANIFEST_VERSION})",
            path.display(),
            m.format_version
        );
        Ok(m)
    }
}

/// The numeric backend is single-threaded with a fixed reduction order, so
/// runs are always bit-reproducible; the variable only records intent.
pub fn deterministic_mode() -> bool {
    match std::env::var(DETERMINISTIC_ENV) {
        Ok(v) => !matches!(v.as_str(), "0" | "false" | "off" | ""),
        Err(_) => true,
    }
}
