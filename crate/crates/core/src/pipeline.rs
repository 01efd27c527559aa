//! Whole-pipeline steps shared by the command line and the browser demo.

use std::collections::BTreeMap;

use crate::backend::Backend;
use crate::calibration::{subtract_baseline_set, CalibrationError, IdleBaseline};
use crate::io::{GroupResult, SampleRecord, SuiteManifest};
use crate::model::MeasurementSet;
use crate::orchestrator::{run_problem_suite, RunConfig, RunError};
use crate::profile::{classify_outliers, fit, FitMode, ProfileError, ProfilePoint};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteRun {
    pub sets: Vec<MeasurementSet>,
    pub samples: Vec<SampleRecord>,
    pub warnings: Vec<String>,
}

/// Measures every problem of a manifest, in manifest order.
pub fn measure_manifest(
    manifest: &SuiteManifest,
    config: &RunConfig,
    backend: &mut dyn Backend,
) -> Result<SuiteRun, RunError> {
    let mut out = SuiteRun::default();
    let machine = &manifest.machine.id;
    for problem in &manifest.problems {
        let outcome = run_problem_suite(backend, machine, &problem.spec, &problem.solution_specs(), config)?;
        let tag = &outcome.set.config_tag;
        out.samples.extend(
            outcome
                .samples
                .iter()
                .map(|(sid, s)| SampleRecord::new(&problem.spec.problem_id, sid, machine, tag, s)),
        );
        out.warnings.extend(outcome.warnings);
        out.sets.push(outcome.set);
    }
    Ok(out)
}

/// Subtracts the baseline of each set's machine. Sets from machines without a
/// baseline are returned unchanged, with a warning.
pub fn apply_baselines(
    sets: &[MeasurementSet],
    baselines: &[IdleBaseline],
) -> Result<(Vec<MeasurementSet>, Vec<String>), CalibrationError> {
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(sets.len());
    for set in sets {
        match baselines.iter().find(|b| b.machine == set.machine) {
            Some(b) => {
                let (adjusted, w) = subtract_baseline_set(set, b)?;
                warnings.extend(w);
                out.push(adjusted);
            }
            None => {
                if !baselines.is_empty() {
                    warnings.push(format!("no idle baseline for machine {}", set.machine));
                }
                out.push(set.clone());
            }
        }
    }
    Ok((out, warnings))
}

/// Fits one measurement set and grades its outliers.
pub fn analyze_set(set: &MeasurementSet, mode: FitMode) -> Result<GroupResult, ProfileError> {
    let points: Vec<ProfilePoint> = set.measurements.iter().map(ProfilePoint::from).collect();
    let profile = fit(&points, mode)?;
    let outliers = classify_outliers(&points, &profile);
    Ok(GroupResult {
        problem_id: set.problem_id.clone(),
        machine: set.machine.clone(),
        config_tag: set.config_tag.clone(),
        baseline_adjusted: !set.measurements.is_empty() && set.measurements.iter().all(|m| m.baseline_adjusted),
        points,
        profile,
        outliers,
    })
}

/// Fits every set. Failures are returned per group as
/// `(problem_id, machine, config_tag, error)`.
#[allow(clippy::type_complexity)]
pub fn analyze_sets(
    sets: &[MeasurementSet],
    mode: FitMode,
) -> (Vec<GroupResult>, Vec<(String, String, String, ProfileError)>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for set in sets {
        match analyze_set(set, mode) {
            Ok(g) => ok.push(g),
            Err(e) => failed.push((set.problem_id.clone(), set.machine.clone(), set.config_tag.clone(), e)),
        }
    }
    ok.sort_by(|a, b| (&a.problem_id, &a.machine, &a.config_tag).cmp(&(&b.problem_id, &b.machine, &b.config_tag)));
    (ok, failed)
}

/// Problem → fitted slope for the groups of one machine.
pub fn slopes_for_machine(groups: &[GroupResult], machine: &str) -> BTreeMap<String, f64> {
    groups
        .iter()
        .filter(|g| g.machine == machine)
        .map(|g| (g.problem_id.clone(), g.profile.slope_a))
        .collect()
}
