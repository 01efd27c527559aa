use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fmt_f64, IoError};
use crate::model::RunSample;

pub const SAMPLES_HEADER: [&str; 8] = [
    "problem_id",
    "solution_id",
    "machine",
    "config_tag",
    "run_index",
    "wall_ms",
    "cpu_ms",
    "energy_j",
];

/// One raw repetition as stored in `samples.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub problem_id: String,
    pub solution_id: String,
    pub machine: String,
    pub config_tag: String,
    pub run_index: u32,
    pub wall_ms: f64,
    pub cpu_ms: f64,
    pub energy_j: f64,
}

impl SampleRecord {
    pub fn new(problem_id: &str, solution_id: &str, machine: &str, config_tag: &str, s: &RunSample) -> Self {
        SampleRecord {
            problem_id: problem_id.to_string(),
            solution_id: solution_id.to_string(),
            machine: machine.to_string(),
            config_tag: config_tag.to_string(),
            run_index: s.run_index,
            wall_ms: s.wall_ms,
            cpu_ms: s.cpu_ms,
            energy_j: s.energy_j,
        }
    }

    pub fn sample(&self) -> RunSample {
        RunSample {
            wall_ms: self.wall_ms,
            cpu_ms: self.cpu_ms,
            energy_j: self.energy_j,
            run_index: self.run_index,
        }
    }
}

pub fn write_samples_csv(samples: &[SampleRecord], path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SAMPLES_HEADER).map_err(|e| IoError::io(path, e))?;
    for s in samples {
        w.write_record([
            s.problem_id.clone(),
            s.solution_id.clone(),
            s.machine.clone(),
            s.config_tag.clone(),
            s.run_index.to_string(),
            fmt_f64(s.wall_ms),
            fmt_f64(s.cpu_ms),
            fmt_f64(s.energy_j),
        ])
        .map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleRecord>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers().map_err(|e| IoError::parse(path, e))?.clone();
    let mismatch = |message: String| IoError::SchemaMismatch {
        path: path.display().to_string(),
        message,
    };
    if let Some(extra) = headers.iter().find(|h| !SAMPLES_HEADER.contains(h)) {
        return Err(mismatch(format!("unexpected column {extra:?}")));
    }
    if let Some(missing) = SAMPLES_HEADER.iter().find(|h| !headers.iter().any(|x| x == **h)) {
        return Err(mismatch(format!("missing column {missing:?}")));
    }
    if headers.iter().ne(SAMPLES_HEADER.iter().copied()) {
        return Err(mismatch("columns out of order".into()));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| IoError::parse(path, format!("row {}: {e}", i + 1))))
        .collect()
}
