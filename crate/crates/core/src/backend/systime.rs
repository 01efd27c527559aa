//! Shell-chain timing with powercap energy bracketing.
//!
//! One repetition is a single `bash -c` invocation that runs the solution once
//! per input, chained with `&&`. Each link is wrapped in the `time` keyword
//! whose report is appended to a scratch file; CPU time is the sum of user and
//! system time over all links.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use super::powercap::{counter_delta, EnergyCounter};
use super::process::{run_bash, shell_quote};
use super::{Backend, BackendError, BackendKind};
use crate::model::{ProblemSpec, RunSample, SolutionSpec};

/// Prefix of the lines the `time` keyword writes, so solution stderr mixed
/// into the scratch file is ignored.
pub const TIME_MARKER: &str = "JOULEMARK_TIME";
const TIMEFORMAT: &str = "JOULEMARK_TIME %3R %3U %3S";

fn link(cmd: &str, input: &str, discard_output: bool) -> String {
    let mut s = format!("{cmd} < {}", shell_quote(input));
    if discard_output {
        s.push_str(" > /dev/null 2>&1");
    }
    s
}

/// The wall-clock chain: `cmd < in1 > /dev/null 2>&1 && cmd < in2 ...`.
pub fn wall_chain_command(cmd: &str, inputs: &[String], discard_output: bool) -> String {
    inputs
        .iter()
        .map(|i| link(cmd, i, discard_output))
        .collect::<Vec<_>>()
        .join(" && ")
}

/// The CPU-time chain: `{ time cmd < in1 > /dev/null 2>&1; } 2>> tmp && ...`.
pub fn cpu_chain_command(cmd: &str, inputs: &[String], discard_output: bool, tmpfile: &str) -> String {
    inputs
        .iter()
        .map(|i| {
            format!(
                "{{ time {}; }} 2>> {}",
                link(cmd, i, discard_output),
                shell_quote(tmpfile)
            )
        })
        .collect::<Vec<_>>()
        .join(" && ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeReport {
    pub real_s: f64,
    pub user_s: f64,
    pub sys_s: f64,
}

/// Extracts the marker lines written by the `time` keyword.
pub fn parse_time_reports(text: &str) -> Vec<TimeReport> {
    text.lines()
        .filter_map(|l| {
            let rest = l.trim().strip_prefix(TIME_MARKER)?;
            let v: Vec<f64> = rest.split_whitespace().filter_map(|x| x.parse().ok()).collect();
            match v[..] {
                [real_s, user_s, sys_s] => Some(TimeReport { real_s, user_s, sys_s }),
                _ => None,
            }
        })
        .collect()
}

static SCRATCH_SEQ: AtomicU64 = AtomicU64::new(0);

fn scratch_file() -> PathBuf {
    let n = SCRATCH_SEQ.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("joulemark-time-{}-{n}", std::process::id()))
}

/// Runs `cmd` once per input and measures the whole chain.
///
/// `input_index` in [`BackendError::NonZeroExit`] is 1-based.
pub fn measure_command_systime(
    cmd: &SolutionSpec,
    inputs: &[String],
    discard_output: bool,
    counter: &dyn EnergyCounter,
    timeout: Duration,
    cwd: Option<&Path>,
) -> Result<RunSample, BackendError> {
    if inputs.is_empty() {
        return Err(BackendError::NoInputs);
    }
    let scratch = scratch_file();
    let script = cpu_chain_command(
        &cmd.command_template,
        inputs,
        discard_output,
        &scratch.display().to_string(),
    );
    let script = match cwd {
        Some(dir) => format!("cd {} && {script}", shell_quote(&dir.display().to_string())),
        None => script,
    };

    let before = counter.snapshot()?;
    let run = run_bash(&script, &[("TIMEFORMAT", TIMEFORMAT), ("LC_ALL", "C")], timeout, false);
    let after = counter.snapshot();
    let reports = fs::read_to_string(&scratch)
        .map(|t| parse_time_reports(&t))
        .unwrap_or_default();
    let _ = fs::remove_file(&scratch);

    let finished = run?;
    let after = after?;
    if !finished.status.success() {
        return Err(BackendError::NonZeroExit {
            input_index: reports.len().max(1),
            status: finished.status.code(),
        });
    }
    if reports.len() != inputs.len() {
        return Err(BackendError::Spawn(format!(
            "expected {} time reports, found {}",
            inputs.len(),
            reports.len()
        )));
    }

    let cpu_s: f64 = reports.iter().map(|r| r.user_s + r.sys_s).sum();
    Ok(RunSample {
        wall_ms: finished.elapsed.as_secs_f64() * 1e3,
        cpu_ms: cpu_s * 1e3,
        energy_j: counter_delta(&before, &after)?,
        run_index: 0,
    })
}

/// Powercap counters around a `bash` chain.
pub struct SystimeBackend<C> {
    counter: C,
    timeout: Duration,
    cwd: Option<PathBuf>,
    discard_output: bool,
}

impl<C: EnergyCounter> SystimeBackend<C> {
    pub fn new(counter: C, timeout: Duration, cwd: Option<PathBuf>) -> Self {
        SystimeBackend {
            counter,
            timeout,
            cwd,
            discard_output: true,
        }
    }
}

impl<C: EnergyCounter> Backend for SystimeBackend<C> {
    fn kind(&self) -> BackendKind {
        BackendKind::PowercapSystime
    }

    fn measure(
        &mut self,
        problem: &ProblemSpec,
        solution: &SolutionSpec,
        run_index: u32,
    ) -> Result<RunSample, BackendError> {
        let mut s = measure_command_systime(
            solution,
            &problem.input_paths,
            self.discard_output,
            &self.counter,
            self.timeout,
            self.cwd.as_deref(),
        )?;
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
        let mut s = measure_command_systime(
            &sleep,
            &["/dev/null".to_string()],
            true,
            &self.counter,
            self.timeout + Duration::from_secs_f64(duration_ms / 1e3),
            None,
        )?;
        s.run_index = run_index;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::backend::CounterSnapshot;

    /// Advances by a fixed step on every read.
    struct Ticking {
        next: Cell<u64>,
        step: u64,
    }

    impl EnergyCounter for Ticking {
        fn snapshot(&self) -> Result<CounterSnapshot, BackendError> {
            let v = self.next.get();
            self.next.set(v + self.step);
            Ok(CounterSnapshot {
                energy_uj: v,
                max_range_uj: 1 << 40,
                timestamp_ns: 0,
            })
        }
    }

    fn ticking() -> Ticking {
        Ticking {
            next: Cell::new(1000),
            step: 250_000,
        }
    }

    fn solution(cmd: &str) -> SolutionSpec {
        SolutionSpec {
            solution_id: "s".into(),
            command_template: cmd.into(),
            language_tag: "sh".into(),
            flag_tag: String::new(),
            judge_time_ms: None,
        }
    }

    fn inputs(n: usize) -> (tempfile::TempDir, Vec<String>) {
        let dir = tempfile::tempdir().unwrap();
        let paths = (1..=n)
            .map(|i| {
                let p = dir.path().join(format!("input{i:02}"));
                fs::write(&p, format!("{i}\n")).unwrap();
                p.display().to_string()
            })
            .collect();
        (dir, paths)
    }

    #[test]
    fn chain_templates() {
        let ins: Vec<String> = ["input01", "input02", "input03"].map(String::from).to_vec();
        assert_eq!(
            wall_chain_command("./a.out", &ins, true),
            "./a.out < input01 > /dev/null 2>&1 && ./a.out < input02 > /dev/null 2>&1 && ./a.out < input03 > /dev/null 2>&1"
        );
        assert_eq!(
            cpu_chain_command("./a.out", &ins[..2], true, "tmp"),
            "{ time ./a.out < input01 > /dev/null 2>&1; } 2>> tmp && { time ./a.out < input02 > /dev/null 2>&1; } 2>> tmp"
        );
        assert_eq!(wall_chain_command("java Main", &ins[..1], false), "java Main < input01");
    }

    #[test]
    fn time_report_parsing_skips_noise() {
        let t = "segfault noise\nJOULEMARK_TIME 0.201 0.100 0.020\nJOULEMARK_TIME 1.000 0.5 0.25\nJOULEMARK_TIME bad\n";
        let r = parse_time_reports(t);
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].user_s, 0.5);
    }

    #[test]
    fn sleep_stub_wall_and_cpu() {
        let (_d, ins) = inputs(1);
        let s = measure_command_systime(
            &solution("sleep 0.2"),
            &ins,
            true,
            &ticking(),
            Duration::from_secs(10),
            None,
        )
        .unwrap();
        assert!(s.wall_ms >= 200.0 && s.wall_ms < 400.0, "{s:?}");
        assert!(s.cpu_ms < 50.0, "{s:?}");
        assert!((s.energy_j - 0.25).abs() < 1e-12);
    }

    #[test]
    fn failing_link_names_its_input() {
        let (dir, ins) = inputs(3);
        let stub = dir.path().join("stub.sh");
        fs::write(&stub, "read x; [ \"$x\" != 2 ]\n").unwrap();
        let err = measure_command_systime(
            &solution(&format!("bash {}", stub.display())),
            &ins,
            true,
            &ticking(),
            Duration::from_secs(10),
            None,
        )
        .unwrap_err();
        assert_eq!(
            err,
            BackendError::NonZeroExit {
                input_index: 2,
                status: Some(1)
            }
        );
    }

    #[test]
    fn empty_input_list_rejected() {
        let err =
            measure_command_systime(&solution("cat"), &[], true, &ticking(), Duration::from_secs(1), None).unwrap_err();
        assert_eq!(err, BackendError::NoInputs);
    }

    #[test]
    fn hung_solution_times_out() {
        let (_d, ins) = inputs(1);
        let err = measure_command_systime(
            &solution("sleep 10"),
            &ins,
            true,
            &ticking(),
            Duration::from_millis(300),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, BackendError::Timeout { .. }));
    }

    #[test]
    fn backend_sleep_measurement() {
        let mut b = SystimeBackend::new(ticking(), Duration::from_secs(5), None);
        let s = b.measure_sleep(100.0, 3).unwrap();
        assert_eq!(s.run_index, 3);
        assert!(s.wall_ms >= 100.0);
    }
}
