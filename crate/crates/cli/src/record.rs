//! Append-only log with one JSON record per invocation.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub subcommand: String,
    /// Every flag after defaults and environment were applied.
    pub config: Value,
    /// SHA-256 of each input file, keyed by path.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_secs: u64,
    pub duration_secs: f64,
    pub tool_version: String,
    /// `ok`, or the error that ended the run.
    pub status: String,
}

impl RunRecord {
    pub fn new(subcommand: &str, config: Value, started: SystemTime, elapsed: Duration) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config,
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            started_unix_secs: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            duration_secs: elapsed.as_secs_f64(),
            tool_version: dcsft_core::TOOL_VERSION.to_string(),
            status: "ok".to_string(),
        }
    }

    pub fn append_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening run log {}", path.display()))?;
        f.write_all(line.as_bytes())
            .with_context(|| format!("appending to run log {}", path.display()))
    }
}

/// What a subcommand reports back for its record.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}
