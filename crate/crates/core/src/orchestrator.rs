//! Measurement protocol: preflight, repetitions, trim-and-aggregate, suites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendKind, DEFAULT_TIMEOUT_S};
use crate::model::{
    config_tag, MeasurementSet, ProblemSpec, RunSample, SolutionFailure, SolutionMeasurement, SolutionSpec,
};

pub const DEFAULT_REPETITIONS: u32 = 10;
/// Runs dropped by the trim rule.
pub const TRIMMED_RUNS: u32 = 2;
/// Wall time above CPU time by more than this is reported.
pub const WALL_CPU_GAP_MS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrimPolicy {
    /// Drop the single highest-energy and the single lowest-energy run.
    #[default]
    DropMaxMinEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_reps")]
    pub repetitions: u32,
    #[serde(default)]
    pub trim_policy: TrimPolicy,
    pub backend: BackendKind,
    #[serde(default)]
    pub single_core: bool,
    #[serde(default)]
    pub flag_tag: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Turns a finite stack limit into a blocker.
    #[serde(default)]
    pub require_unlimited_stack: bool,
}

fn default_reps() -> u32 {
    DEFAULT_REPETITIONS
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

impl RunConfig {
    pub fn new(backend: BackendKind) -> Self {
        RunConfig {
            repetitions: DEFAULT_REPETITIONS,
            trim_policy: TrimPolicy::DropMaxMinEnergy,
            backend,
            single_core: false,
            flag_tag: String::new(),
            timeout_s: DEFAULT_TIMEOUT_S,
            require_unlimited_stack: false,
        }
    }

    pub fn config_tag(&self) -> String {
        config_tag(&self.flag_tag, self.single_core, self.backend.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("{got} repetitions requested; the trim rule needs at least {}", TRIMMED_RUNS + 1)]
    TooFewRepetitions { got: u32 },
    #[error("trim needs at least {} samples, got {got}", TRIMMED_RUNS + 1)]
    TooFewSamples { got: usize },
    #[error("run {run_index}: {source}")]
    Backend { run_index: u32, source: BackendError },
    #[error("run {run_index}: sample has negative or non-finite values")]
    InvalidSample { run_index: u32 },
}

// ---------------------------------------------------------------------------
// Preflight

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Advisory,
    Blocker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    /// Commands the operator has to run; never executed by this tool.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<String>,
}

/// Observed state of the host relevant to measurement validity.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HostState {
    /// Soft stack limit in KiB; `None` means unlimited.
    pub stack_limit_kb: Option<u64>,
    pub online_cpus: Vec<u32>,
    /// Why the configured energy backend cannot be used, if it cannot.
    pub energy_unavailable: Option<String>,
}

pub const CPU_ONLINE_PATH: &str = "/sys/devices/system/cpu/online";
/// Overrides [`CPU_ONLINE_PATH`], e.g. inside containers.
pub const CPU_ONLINE_ENV: &str = "JOULEMARK_CPU_ONLINE_FILE";

/// Parses a sysfs CPU list such as `0-3,6`.
pub fn parse_cpu_list(text: &str) -> Option<Vec<u32>> {
    let mut out = Vec::new();
    for part in text.trim().split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
                if b < a {
                    return None;
                }
                out.extend(a..=b);
            }
            None => out.push(part.trim().parse().ok()?),
        }
    }
    Some(out)
}

#[cfg(unix)]
impl HostState {
    /// Reads the stack limit, the online CPU list and energy backend status.
    pub fn probe(backend: BackendKind, powercap_root: &std::path::Path) -> Self {
        use crate::backend::{EnergyCounter, Powercap};

        let stack_limit_kb = {
            let mut lim = libc::rlimit {
                rlim_cur: 0,
                rlim_max: 0,
            };
            // SAFETY: getrlimit only writes into `lim`.
            let rc = unsafe { libc::getrlimit(libc::RLIMIT_STACK, &mut lim) };
            if rc != 0 || lim.rlim_cur == libc::RLIM_INFINITY {
                None
            } else {
                #[allow(clippy::unnecessary_cast)]
                Some(lim.rlim_cur as u64 / 1024)
            }
        };
        let online_path = std::env::var_os(CPU_ONLINE_ENV)
            .map(std::path::PathBuf::from)
            .unwrap_or_else(|| CPU_ONLINE_PATH.into());
        let online_cpus = std::fs::read_to_string(online_path)
            .ok()
            .and_then(|t| parse_cpu_list(&t))
            .unwrap_or_else(|| {
                let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
                (0..n as u32).collect()
            });
        let energy_unavailable = match backend {
            BackendKind::Synthetic => None,
            BackendKind::PowercapSystime => Powercap::new(powercap_root).snapshot().err().map(|e| e.to_string()),
            BackendKind::Perf => {
                let found = std::env::var_os("PATH")
                    .map(|p| std::env::split_paths(&p).any(|d| d.join("perf").is_file()))
                    .unwrap_or(false);
                (!found).then(|| "perf not found on PATH".to_string())
            }
        };
        HostState {
            stack_limit_kb,
            online_cpus,
            energy_unavailable,
        }
    }
}

/// Checks the host against the run configuration. Never changes system state.
pub fn preflight_check(config: &RunConfig, host: &HostState) -> Vec<Finding> {
    let mut out = Vec::new();

    if let Some(kb) = host.stack_limit_kb {
        out.push(Finding {
            severity: if config.require_unlimited_stack {
                Severity::Blocker
            } else {
                Severity::Advisory
            },
            code: "stack-limit".into(),
            message: format!("stack soft limit is {kb} KiB; deep-recursion solutions may crash"),
            commands: vec!["ulimit -s unlimited".into()],
        });
    }

    if config.single_core && host.online_cpus.len() > 1 {
        let keep = host.online_cpus.iter().copied().min().unwrap_or(0);
        let commands = host
            .online_cpus
            .iter()
            .filter(|&&c| c != keep)
            .map(|c| format!("echo 0 > /sys/devices/system/cpu/cpu{c}/online"))
            .collect();
        out.push(Finding {
            severity: Severity::Advisory,
            code: "cores-online".into(),
            message: format!(
                "single-core run requested but {} cores are online",
                host.online_cpus.len()
            ),
            commands,
        });
    }

    if let Some(reason) = &host.energy_unavailable {
        let message = match config.backend {
            BackendKind::PowercapSystime => format!("energy counter unreadable: {reason}"),
            _ => format!("energy backend unavailable: {reason}"),
        };
        out.push(Finding {
            severity: Severity::Blocker,
            code: "energy-backend".into(),
            message,
            commands: vec![],
        });
    }

    if config.repetitions <= TRIMMED_RUNS {
        out.push(Finding {
            severity: Severity::Blocker,
            code: "repetitions".into(),
            message: format!("{} repetitions leave nothing after trimming", config.repetitions),
            commands: vec![],
        });
    }
    out
}

pub fn has_blockers(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Blocker)
}

// ---------------------------------------------------------------------------
// Repetitions

/// Runs the configured number of back-to-back repetitions.
pub fn run_solution(
    backend: &mut dyn Backend,
    problem: &ProblemSpec,
    solution: &SolutionSpec,
    config: &RunConfig,
) -> Result<Vec<RunSample>, RunError> {
    if config.repetitions <= TRIMMED_RUNS {
        return Err(RunError::TooFewRepetitions {
            got: config.repetitions,
        });
    }
    (0..config.repetitions)
        .map(|run_index| {
            let mut s = backend
                .measure(problem, solution, run_index)
                .map_err(|source| RunError::Backend { run_index, source })?;
            s.run_index = run_index;
            if !s.is_valid() {
                return Err(RunError::InvalidSample { run_index });
            }
            Ok(s)
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = mean.clamp(lo, hi);
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Indices of the runs the trim rule drops: `(lowest energy, highest energy)`.
/// Among equal energies the lower `run_index` is dropped first.
pub fn trimmed_indices(samples: &[RunSample]) -> Option<(usize, usize)> {
    if samples.len() <= TRIMMED_RUNS as usize {
        return None;
    }
    let key = |i: usize| (samples[i].energy_j, samples[i].run_index);
    let cmp = |a: &usize, b: &usize| {
        let (ea, ra) = key(*a);
        let (eb, rb) = key(*b);
        ea.total_cmp(&eb).then(ra.cmp(&rb))
    };
    let idx: Vec<usize> = (0..samples.len()).collect();
    let low = *idx.iter().min_by(|a, b| cmp(a, b))?;
    let high = *idx.iter().filter(|&&i| i != low).min_by(|a, b| {
        samples[**b]
            .energy_j
            .total_cmp(&samples[**a].energy_j)
            .then(samples[**a].run_index.cmp(&samples[**b].run_index))
    })?;
    Some((low, high))
}

/// Drops the max- and min-energy runs and summarizes the rest.
pub fn trim_and_aggregate(solution_id: &str, samples: &[RunSample]) -> Result<SolutionMeasurement, RunError> {
    let (low, high) = trimmed_indices(samples).ok_or(RunError::TooFewSamples { got: samples.len() })?;
    let kept: Vec<&RunSample> = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != low && *i != high)
        .map(|(_, s)| s)
        .collect();
    let t: Vec<f64> = kept.iter().map(|s| s.cpu_ms).collect();
    let c: Vec<f64> = kept.iter().map(|s| s.energy_j).collect();
    let w: Vec<f64> = kept.iter().map(|s| s.wall_ms).collect();
    let (t_mean_ms, t_sd_ms) = mean_sd(&t);
    let (c_mean_j, c_sd_j) = mean_sd(&c);
    let (wall_mean_ms, _) = mean_sd(&w);
    Ok(SolutionMeasurement {
        solution_id: solution_id.to_string(),
        t_mean_ms,
        c_mean_j,
        t_sd_ms,
        c_sd_j,
        wall_mean_ms,
        kept_runs: kept.len() as u32,
        baseline_adjusted: false,
        started_unix_ms: None,
    })
}

/// Runs whose wall time exceeds CPU time by more than [`WALL_CPU_GAP_MS`].
pub fn wall_cpu_gaps(samples: &[RunSample]) -> Vec<(u32, f64)> {
    samples
        .iter()
        .filter(|s| s.wall_ms - s.cpu_ms > WALL_CPU_GAP_MS)
        .map(|s| (s.run_index, s.wall_ms - s.cpu_ms))
        .collect()
}

/// Samples and measurement of a whole problem suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub set: MeasurementSet,
    /// Every raw sample, tagged with its solution id, in run order.
    pub samples: Vec<(String, RunSample)>,
    pub warnings: Vec<String>,
}

fn now_unix_ms() -> Option<u64> {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_millis() as u64)
}

/// Measures every solution of one problem in the given order.
///
/// A failing solution is recorded in `set.failures` and the suite continues.
pub fn run_problem_suite(
    backend: &mut dyn Backend,
    machine: &str,
    problem: &ProblemSpec,
    solutions: &[SolutionSpec],
    config: &RunConfig,
) -> Result<SuiteOutcome, RunError> {
    if config.repetitions <= TRIMMED_RUNS {
        return Err(RunError::TooFewRepetitions {
            got: config.repetitions,
        });
    }
    let stamp = backend.kind() != BackendKind::Synthetic;
    let mut set = MeasurementSet {
        machine: machine.to_string(),
        problem_id: problem.problem_id.clone(),
        config_tag: config.config_tag(),
        measurements: Vec::with_capacity(solutions.len()),
        failures: Vec::new(),
    };
    let mut samples = Vec::new();
    let mut warnings = Vec::new();

    for solution in solutions {
        let started = if stamp { now_unix_ms() } else { None };
        let runs = match run_solution(backend, problem, solution, config) {
            Ok(r) => r,
            Err(e) => {
                set.failures.push(SolutionFailure {
                    solution_id: solution.solution_id.clone(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        for (run_index, gap) in wall_cpu_gaps(&runs) {
            warnings.push(format!(
                "{}/{} run {run_index}: wall time exceeds CPU time by {gap:.1} ms",
                problem.problem_id, solution.solution_id
            ));
        }
        let mut m = trim_and_aggregate(&solution.solution_id, &runs)?;
        m.started_unix_ms = started;
        set.measurements.push(m);
        samples.extend(runs.into_iter().map(|s| (solution.solution_id.clone(), s)));
    }
    Ok(SuiteOutcome { set, samples, warnings })
}
