//! Shared domain records.
//!
//! Units are fixed across the crate: time in milliseconds, energy in joules.
//! Spread values (`t_sd_ms`, `c_sd_j`, ...) are always standard deviations,
//! never variances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A machine a dataset was measured on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineDescriptor {
    pub id: String,
    #[serde(default)]
    pub cpu_label: String,
    pub core_count: u32,
    #[serde(default)]
    pub notes: String,
}

/// A problem and the ordered inputs each solution is run against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem_id: String,
    pub input_paths: Vec<String>,
    #[serde(default)]
    pub category: String,
}

impl ProblemSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.input_paths.is_empty() {
            out.push(format!("problem {} has no input paths", self.problem_id));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.input_paths {
            if !seen.insert(p) {
                out.push(format!("problem {} lists input twice: {p}", self.problem_id));
            }
        }
        out
    }
}

/// One solution program. `command_template` is a shell fragment (for example
/// `./a.out` or `java Main`); the input is always fed through stdin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSpec {
    pub solution_id: String,
    pub command_template: String,
    #[serde(default)]
    pub language_tag: String,
    #[serde(default)]
    pub flag_tag: String,
    /// Judge-reported server time, kept only as selection metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_time_ms: Option<f64>,
}

/// One execution of a solution over all of a problem's inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSample {
    pub wall_ms: f64,
    /// user + system
    pub cpu_ms: f64,
    pub energy_j: f64,
    pub run_index: u32,
}

impl RunSample {
    pub fn is_valid(&self) -> bool {
        [self.wall_ms, self.cpu_ms, self.energy_j]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Trimmed aggregate of a solution's repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeasurement {
    pub solution_id: String,
    /// Mean CPU time of the kept runs.
    pub t_mean_ms: f64,
    pub c_mean_j: f64,
    pub t_sd_ms: f64,
    pub c_sd_j: f64,
    /// Mean wall time of the kept runs; idle baselines are charged against it.
    pub wall_mean_ms: f64,
    pub kept_runs: u32,
    #[serde(default)]
    pub baseline_adjusted: bool,
    /// Unix start time of the first repetition (real backends only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_unix_ms: Option<u64>,
}

/// A solution that could not be measured during a suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionFailure {
    pub solution_id: String,
    pub error: String,
}

/// All measurements of one problem on one machine under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub machine: String,
    pub problem_id: String,
    /// `flag|core-mode|backend`
    pub config_tag: String,
    pub measurements: Vec<SolutionMeasurement>,
    /// Non-empty marks a partial set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<SolutionFailure>,
}

impl MeasurementSet {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Builds the `flag|core-mode|backend` tag that groups comparable sets.
pub fn config_tag(flag_tag: &str, single_core: bool, backend: &str) -> String {
    let cores = if single_core { "single-core" } else { "multi-core" };
    format!("{flag_tag}|{cores}|{backend}")
}

/// Checks every record invariant of a measurement set.
///
/// Violations come back sorted and de-duplicated, so the result does not
/// depend on the order of `set.measurements`.
pub fn validate_dataset(set: &MeasurementSet) -> Vec<String> {
    let mut out = Vec::new();
    if set.machine.trim().is_empty() {
        out.push("empty machine id".to_string());
    }
    if set.problem_id.trim().is_empty() {
        out.push("empty problem_id".to_string());
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &set.measurements {
        *counts.entry(m.solution_id.as_str()).or_default() += 1;
    }
    for (id, n) in &counts {
        if *n > 1 {
            out.push(format!("duplicate solution_id: {id}"));
        }
    }

    for m in &set.measurements {
        let id = &m.solution_id;
        if id.trim().is_empty() {
            out.push("empty solution_id".to_string());
        }
        if m.kept_runs < 1 {
            out.push(format!("no kept runs: {id}"));
        }
        for (name, v) in [("t_sd_ms", m.t_sd_ms), ("c_sd_j", m.c_sd_j)] {
            if !v.is_finite() {
                out.push(format!("non-finite standard deviation: {id} {name} = {v}"));
            } else if v < 0.0 {
                out.push(format!("negative standard deviation: {id} {name} = {v}"));
            }
        }
        for (name, v) in [
            ("t_mean_ms", m.t_mean_ms),
            ("c_mean_j", m.c_mean_j),
            ("wall_mean_ms", m.wall_mean_ms),
        ] {
            if !v.is_finite() {
                out.push(format!("non-finite mean: {id} {name} = {v}"));
            } else if v < 0.0 {
                out.push(format!("negative mean: {id} {name} = {v}"));
            }
        }
    }

    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn measurement(id: &str, t: f64, c: f64) -> SolutionMeasurement {
        SolutionMeasurement {
            solution_id: id.to_string(),
            t_mean_ms: t,
            c_mean_j: c,
            t_sd_ms: 1.0,
            c_sd_j: 0.1,
            wall_mean_ms: t,
            kept_runs: 8,
            baseline_adjusted: false,
            started_unix_ms: None,
        }
    }

    fn set(ms: Vec<SolutionMeasurement>) -> MeasurementSet {
        MeasurementSet {
            machine: "hpelite".into(),
            problem_id: "1068".into(),
            config_tag: config_tag("-O2", false, "synthetic"),
            measurements: ms,
            failures: vec![],
        }
    }

    #[test]
    fn duplicate_ids_reported_once() {
        let s = set(vec![
            measurement("s1", 10.0, 1.0),
            measurement("s1", 20.0, 2.0),
            measurement("s2", 30.0, 3.0),
        ]);
        assert_eq!(validate_dataset(&s), vec!["duplicate solution_id: s1"]);
    }

    #[test]
    fn well_formed_set_is_clean() {
        let ms = (0..30)
            .map(|i| measurement(&format!("s{i:02}"), 10.0 * (i + 1) as f64, 0.1 * (i + 1) as f64))
            .collect();
        assert!(validate_dataset(&set(ms)).is_empty());
    }

    #[test]
    fn negative_sd() {
        let mut m = measurement("s7", 10.0, 1.0);
        m.c_sd_j = -1.0;
        let v = validate_dataset(&set(vec![m]));
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("negative standard deviation: s7"), "{v:?}");
    }

    #[test]
    fn validation_is_order_independent() {
        let mut a = measurement("a", 1.0, 1.0);
        a.t_sd_ms = -2.0;
        let mut b = measurement("b", 1.0, f64::NAN);
        b.kept_runs = 0;
        let s1 = set(vec![a.clone(), b.clone(), a.clone()]);
        let s2 = set(vec![b, a.clone(), a]);
        let v1 = validate_dataset(&s1);
        assert_eq!(v1, validate_dataset(&s2));
        assert_eq!(v1, validate_dataset(&s1));
        assert_eq!(v1.len(), 4, "{v1:?}");
    }

    #[test]
    fn problem_input_rules() {
        let p = ProblemSpec {
            problem_id: "1".into(),
            input_paths: vec!["a".into(), "a".into()],
            category: String::new(),
        };
        assert_eq!(p.violations().len(), 1);
        let empty = ProblemSpec {
            input_paths: vec![],
            ..p
        };
        assert_eq!(empty.violations().len(), 1);
    }

    #[test]
    fn config_tag_shape() {
        assert_eq!(config_tag("-O2", true, "perf"), "-O2|single-core|perf");
    }
}
