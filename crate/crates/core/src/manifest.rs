//! Run manifests written next to every output file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    /// Full argument vector with the resolved seed spelled out, so replaying
    /// it reproduces the run.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub seed_from_entropy: bool,
    pub threads: Option<usize>,
    pub version: String,
    /// Seconds since the Unix epoch at start.
    pub started_at: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, seed: Option<u64>, seed_from_entropy: bool, threads: Option<usize>) -> Self {
        let started_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        RunManifest {
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            argv,
            seed,
            seed_from_entropy,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    /// `out.json` → `out.json.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_for(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }
}
