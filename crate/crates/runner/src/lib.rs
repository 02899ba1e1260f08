//! Experiment orchestration around `eng-core`: configs, dataset
//! preparation, seeded runs with manifests, sweeps, reports and replay.

pub mod config;
pub mod dataset;
pub mod records;
pub mod report;
pub mod run;
pub mod sweep;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset file not found: {}", .0.display())]
    MissingData(PathBuf),
    #[error(transparent)]
    Core(#[from] eng_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("replay: {0}")]
    Replay(String),
}

impl RunnerError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunnerError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable tag for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            RunnerError::Config(_) => "config",
            RunnerError::MissingData(_) => "missing_data",
            RunnerError::Core(_) => "core",
            RunnerError::Io { .. } => "io",
            RunnerError::Json(_) => "json",
            RunnerError::Replay(_) => "replay",
        }
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| RunnerError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| RunnerError::io(&tmp, e))?;
    f.sync_all().map_err(|e| RunnerError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| RunnerError::io(path, e))
}
