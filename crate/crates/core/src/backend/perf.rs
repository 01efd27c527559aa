//! `perf stat` wrapping.
//!
//! Each input gets its own invocation:
//!
//! ```text
//! perf stat -x ';' -e power/energy-pkg/,user_time,system_time --all-cpus <cmd> < <input>
//! ```
//!
//! With `-x ';'` every counter is one line on stderr: value, unit, event name,
//! then optional run-time columns. The solution's own stderr is interleaved, so
//! lines without a separator are skipped. A required event that is absent,
//! unsupported, or unparsable is always an error, never a zero.

use thiserror::Error;

pub const ENERGY_EVENT: &str = "power/energy-pkg/";
pub const USER_TIME_EVENT: &str = "user_time";
pub const SYSTEM_TIME_EVENT: &str = "system_time";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("perf output parse failure{}: {reason}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
pub struct PerfParseError {
    pub line: Option<usize>,
    pub reason: String,
}

impl PerfParseError {
    fn at(line: usize, reason: impl Into<String>) -> Self {
        PerfParseError {
            line: Some(line),
            reason: reason.into(),
        }
    }

    fn whole(reason: impl Into<String>) -> Self {
        PerfParseError {
            line: None,
            reason: reason.into(),
        }
    }
}

/// A counter value with the unit column perf printed next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventValue {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfReading {
    pub energy: EventValue,
    pub user_time: EventValue,
    pub system_time: EventValue,
}

/// A reading converted to joules and seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfTotals {
    pub energy_j: f64,
    pub user_s: f64,
    pub system_s: f64,
}

fn energy_scale(unit: &str) -> Option<f64> {
    match unit {
        "Joules" | "joules" | "J" => Some(1.0),
        "mJ" => Some(1e-3),
        "uJ" | "µJ" => Some(1e-6),
        _ => None,
    }
}

fn time_scale(unit: &str) -> Option<f64> {
    match unit {
        "" | "s" | "sec" | "secs" | "seconds" => Some(1.0),
        "ms" | "msec" | "msecs" => Some(1e-3),
        "us" | "usec" | "usecs" | "µs" => Some(1e-6),
        "ns" | "nsec" | "nsecs" => Some(1e-9),
        _ => None,
    }
}

impl PerfReading {
    /// Converts to joules and seconds; unknown unit labels are refused.
    pub fn normalized(&self) -> Result<PerfTotals, PerfParseError> {
        let unit_err = |event: &str, unit: &str| PerfParseError::whole(format!("unknown unit {unit:?} for {event}"));
        let e = energy_scale(&self.energy.unit).ok_or_else(|| unit_err(ENERGY_EVENT, &self.energy.unit))?;
        let u = time_scale(&self.user_time.unit).ok_or_else(|| unit_err(USER_TIME_EVENT, &self.user_time.unit))?;
        let s =
            time_scale(&self.system_time.unit).ok_or_else(|| unit_err(SYSTEM_TIME_EVENT, &self.system_time.unit))?;
        Ok(PerfTotals {
            energy_j: self.energy.value * e,
            user_s: self.user_time.value * u,
            system_s: self.system_time.value * s,
        })
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Energy,
    User,
    System,
}

fn slot_for(event: &str) -> Option<Slot> {
    // perf may print the event with a modifier suffix, e.g. `power/energy-pkg/u`
    if event.starts_with(ENERGY_EVENT) || event.contains("energy-pkg") {
        Some(Slot::Energy)
    } else if event == USER_TIME_EVENT || event.starts_with("user_time:") {
        Some(Slot::User)
    } else if event == SYSTEM_TIME_EVENT || event.starts_with("system_time:") {
        Some(Slot::System)
    } else {
        None
    }
}

/// Parses the stderr stream of a `perf stat -x ';'` run.
pub fn parse_perf_output(text: &str) -> Result<PerfReading, PerfParseError> {
    if text.trim().is_empty() {
        return Err(PerfParseError::whole("empty output"));
    }
    let mut found: [Option<EventValue>; 3] = [None, None, None];

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || !line.contains(';') {
            continue;
        }
        let fields: Vec<&str> = line.split(';').collect();
        if fields.len() < 3 {
            return Err(PerfParseError::at(lineno, "truncated record"));
        }
        let event = fields[2].trim();
        let Some(slot) = slot_for(event) else {
            continue;
        };
        let value_field = fields[0].trim();
        let value = match value_field {
            "<not supported>" => {
                return Err(PerfParseError::at(lineno, format!("unsupported event {event}")));
            }
            "<not counted>" => {
                return Err(PerfParseError::at(lineno, format!("event not counted {event}")));
            }
            v => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| PerfParseError::at(lineno, format!("malformed value {v:?} for {event}")))?,
        };
        let entry = &mut found[slot as usize];
        if entry.is_some() {
            return Err(PerfParseError::at(lineno, format!("duplicate event {event}")));
        }
        *entry = Some(EventValue {
            value,
            unit: fields[1].trim().to_string(),
        });
    }

    let [energy, user, system] = found;
    let missing = |name: &str| PerfParseError::whole(format!("missing event {name}"));
    Ok(PerfReading {
        energy: energy.ok_or_else(|| missing(ENERGY_EVENT))?,
        user_time: user.ok_or_else(|| missing(USER_TIME_EVENT))?,
        system_time: system.ok_or_else(|| missing(SYSTEM_TIME_EVENT))?,
    })
}

/// The perf invocation for one input, exactly as run by the backend.
pub fn perf_invocation(cmd: &str, input: &str) -> String {
    format!("perf stat -x ';' -e {ENERGY_EVENT},{USER_TIME_EVENT},{SYSTEM_TIME_EVENT} --all-cpus {cmd} < {input}")
}

#[cfg(unix)]
pub use native::{measure_command_perf, PerfBackend};

#[cfg(unix)]
mod native {
    use std::path::PathBuf;
    use std::time::Duration;

    use super::*;
    use crate::backend::process::{on_path, run_bash, shell_quote};
    use crate::backend::{Backend, BackendError, BackendKind};
    use crate::model::{ProblemSpec, RunSample, SolutionSpec};

    /// Sums per-input readings into one repetition.
    pub(crate) fn sum_totals(parts: &[(PerfTotals, f64)]) -> RunSample {
        let mut s = RunSample {
            wall_ms: 0.0,
            cpu_ms: 0.0,
            energy_j: 0.0,
            run_index: 0,
        };
        for (t, wall_ms) in parts {
            s.energy_j += t.energy_j;
            s.cpu_ms += (t.user_s + t.system_s) * 1e3;
            s.wall_ms += wall_ms;
        }
        s
    }

    /// One perf invocation per input; `input_index` in errors is 1-based.
    pub fn measure_command_perf(
        cmd: &SolutionSpec,
        inputs: &[String],
        timeout: Duration,
        cwd: Option<&std::path::Path>,
    ) -> Result<RunSample, BackendError> {
        if inputs.is_empty() {
            return Err(BackendError::NoInputs);
        }
        if !on_path("perf") {
            return Err(BackendError::PerfUnavailable("perf not found on PATH".into()));
        }
        let mut parts = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.iter().enumerate() {
            let mut script = perf_invocation(&cmd.command_template, &shell_quote(input));
            if let Some(dir) = cwd {
                script = format!("cd {} && {script}", shell_quote(&dir.display().to_string()));
            }
            let done = run_bash(&script, &[("LC_ALL", "C")], timeout, true)?;
            if !done.status.success() {
                return Err(BackendError::NonZeroExit {
                    input_index: i + 1,
                    status: done.status.code(),
                });
            }
            let reading = parse_perf_output(&String::from_utf8_lossy(&done.stderr))?;
            parts.push((reading.normalized()?, done.elapsed.as_secs_f64() * 1e3));
        }
        Ok(sum_totals(&parts))
    }

    pub struct PerfBackend {
        timeout: Duration,
        cwd: Option<PathBuf>,
    }

    impl PerfBackend {
        pub fn new(timeout: Duration, cwd: Option<PathBuf>) -> Self {
            PerfBackend { timeout, cwd }
        }
    }

    impl Backend for PerfBackend {
        fn kind(&self) -> BackendKind {
            BackendKind::Perf
        }

        fn measure(
            &mut self,
            problem: &ProblemSpec,
            solution: &SolutionSpec,
            run_index: u32,
        ) -> Result<RunSample, BackendError> {
            let mut s = measure_command_perf(solution, &problem.input_paths, self.timeout, self.cwd.as_deref())?;
            s.run_index = run_index;
            Ok(s)
        }

        fn measure_sleep(&mut self, duration_ms: f64, run_index: u32) -> Result<RunSample, BackendError> {
            let sleep = SolutionSpec {
                solution_id: "idle".into(),
                command_template: format!("sleep {:.3}", duration_ms / 1e3),
                language_tag: String::new(),
                flag_tag: String::new(),
                judge_time_ms: None,
            };
            let timeout = self.timeout + Duration::from_secs_f64(duration_ms / 1e3);
            let mut s = measure_command_perf(&sleep, &["/dev/null".to_string()], timeout, None)?;
            s.run_index = run_index;
            Ok(s)
        }
    }

}
