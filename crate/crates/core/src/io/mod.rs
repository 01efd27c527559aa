//! File formats: suite manifests, raw samples (CSV), measurement sets,
//! baselines and summaries (JSON), profile reports and scatter plots (SVG).
//!
//! Floats are written in Rust's shortest round-trip decimal form, so reading a
//! file back yields bit-identical values and unchanged inputs give
//! byte-identical files.

pub mod manifest;
pub mod report;
pub mod samples;
pub mod svg;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use manifest::{load_manifest, ManifestProblem, ManifestSolution, SuiteManifest};
pub use report::{GroupResult, SPEARMAN_HIGHLIGHT};
pub use samples::{read_samples_csv, write_samples_csv, SampleRecord, SAMPLES_HEADER};
pub use svg::{emit_scatter_svg, render_scatter_svg};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: schema mismatch: {message}")]
    SchemaMismatch { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl IoError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn parse(path: &Path, e: impl std::fmt::Display) -> Self {
        IoError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::parse(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::parse(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}
