//! Measurement backends.
//!
//! A backend executes one solution over all inputs of a problem and returns a
//! single [`RunSample`]. Backends are driven strictly sequentially; none of
//! them may be shared across concurrent measurements on the same machine.

pub mod perf;
pub mod powercap;
#[cfg(unix)]
mod process;
pub mod synthetic;
#[cfg(unix)]
pub mod systime;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProblemSpec, RunSample, SolutionSpec};

#[cfg(unix)]
pub use perf::{measure_command_perf, PerfBackend};
pub use perf::{parse_perf_output, PerfParseError, PerfReading};
pub use powercap::{counter_delta, read_package_energy, CounterSnapshot, EnergyCounter, Powercap};
pub use synthetic::{synthetic_measure, SyntheticBackend, SyntheticModel, SyntheticParams};
#[cfg(unix)]
pub use systime::{measure_command_systime, SystimeBackend};

/// Default wall-time cap for one repetition.
pub const DEFAULT_TIMEOUT_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    PowercapSystime,
    Perf,
    Synthetic,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::PowercapSystime => "powercap-systime",
            BackendKind::Perf => "perf",
            BackendKind::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "powercap-systime" => Ok(BackendKind::PowercapSystime),
            "perf" => Ok(BackendKind::Perf),
            "synthetic" => Ok(BackendKind::Synthetic),
            other => Err(format!("unknown backend: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("energy counter unreadable: {path}: {reason}")]
    PathUnreadable { path: String, reason: String },
    #[error("malformed energy counter in {path}: {content:?}")]
    MalformedCounter { path: String, content: String },
    #[error("counter snapshots disagree on range: {before} vs {after}")]
    MismatchedRange { before: u64, after: u64 },
    #[error("no inputs given")]
    NoInputs,
    #[error("command failed on input {input_index} (exit status {status:?})")]
    NonZeroExit { input_index: usize, status: Option<i32> },
    #[error("repetition exceeded the {limit_s} s wall-time cap")]
    Timeout { limit_s: f64 },
    #[error("could not launch command: {0}")]
    Spawn(String),
    #[error("perf unavailable: {0}")]
    PerfUnavailable(String),
    #[error(transparent)]
    Parse(#[from] PerfParseError),
    #[error("unknown synthetic input: {0}")]
    UnknownInput(String),
    #[error("invalid synthetic model: {0}")]
    InvalidModel(String),
}

/// Something that can measure a solution run and an idle sleep.
pub trait Backend {
    fn kind(&self) -> BackendKind;

    /// Runs `solution` once over every input of `problem`.
    fn measure(
        &mut self,
        problem: &ProblemSpec,
        solution: &SolutionSpec,
        run_index: u32,
    ) -> Result<RunSample, BackendError>;

    /// Measures a sleep of `duration_ms`, used for idle calibration.
    fn measure_sleep(&mut self, duration_ms: f64, run_index: u32) -> Result<RunSample, BackendError>;
}
