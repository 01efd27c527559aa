//! Idle-baseline calibration.
//!
//! A machine burns energy even when the measured program sleeps. Sleep runs of
//! several lengths give an idle slope in J/ms (fitted through the origin),
//! which is charged against each measurement's mean wall time and removed
//! before profile fitting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::model::{MeasurementSet, SolutionMeasurement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleBaseline {
    pub machine: String,
    pub idle_slope_j_per_ms: f64,
    pub sample_count: usize,
    /// Residual SD of the origin fit, with one fitted parameter (`n - 1`).
    pub fit_residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("idle calibration needs at least two distinct sleep durations")]
    TooFewDurations,
    #[error("degenerate idle samples: {0}")]
    DegenerateSamples(String),
    #[error("idle sleep of {duration_ms} ms failed: {source}")]
    Backend { duration_ms: f64, source: BackendError },
    #[error("measurement {0} already has its idle baseline removed")]
    AlreadyAdjusted(String),
    #[error("baseline is for machine {baseline}, dataset is from {dataset}")]
    MachineMismatch { baseline: String, dataset: String },
}

fn distinct_count(values: &[f64]) -> usize {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// One sleep measurement per duration, as `(duration_ms, energy_j)`.
pub fn measure_idle(durations_ms: &[f64], backend: &mut dyn Backend) -> Result<Vec<(f64, f64)>, CalibrationError> {
    if distinct_count(durations_ms) < 2 {
        return Err(CalibrationError::TooFewDurations);
    }
    if let Some(bad) = durations_ms.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(CalibrationError::DegenerateSamples(format!("sleep duration {bad}")));
    }
    durations_ms
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            backend
                .measure_sleep(d, i as u32)
                .map(|s| (d, s.energy_j))
                .map_err(|source| CalibrationError::Backend { duration_ms: d, source })
        })
        .collect()
}

/// Fits `energy = slope × duration` by least squares through the origin.
pub fn fit_idle_slope(machine: &str, samples: &[(f64, f64)]) -> Result<IdleBaseline, CalibrationError> {
    if samples.len() < 2 {
        return Err(CalibrationError::DegenerateSamples(format!(
            "{} sample(s)",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(d, e)| !d.is_finite() || !e.is_finite() || *d < 0.0)
    {
        return Err(CalibrationError::DegenerateSamples(
            "non-finite or negative values".into(),
        ));
    }
    let durations: Vec<f64> = samples.iter().map(|s| s.0).collect();
    if distinct_count(&durations) < 2 {
        return Err(CalibrationError::DegenerateSamples("all durations equal".into()));
    }
    let sdd: f64 = samples.iter().map(|(d, _)| d * d).sum();
    let sde: f64 = samples.iter().map(|(d, e)| d * e).sum();
    let slope = sde / sdd;
    if slope < 0.0 {
        return Err(CalibrationError::DegenerateSamples(format!(
            "negative idle slope {slope}"
        )));
    }
    let sse: f64 = samples.iter().map(|(d, e)| (slope * d - e).powi(2)).sum();
    Ok(IdleBaseline {
        machine: machine.to_string(),
        idle_slope_j_per_ms: slope,
        sample_count: samples.len(),
        fit_residual_sd: (sse / (samples.len() - 1) as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted {
    pub measurement: SolutionMeasurement,
    /// The baseline exceeded the measured energy and the result was clamped to 0.
    pub clamped: bool,
}

/// Removes `idle_slope × wall_mean_ms` from the mean energy.
pub fn subtract_baseline(m: &SolutionMeasurement, b: &IdleBaseline) -> Result<Adjusted, CalibrationError> {
    if m.baseline_adjusted {
        return Err(CalibrationError::AlreadyAdjusted(m.solution_id.clone()));
    }
    let raw = m.c_mean_j - b.idle_slope_j_per_ms * m.wall_mean_ms;
    let clamped = raw < 0.0;
    Ok(Adjusted {
        measurement: SolutionMeasurement {
            c_mean_j: raw.max(0.0),
            baseline_adjusted: true,
            ..m.clone()
        },
        clamped,
    })
}

/// Applies a baseline to every measurement of a set from the same machine.
/// Returns the adjusted set and one warning per clamped measurement.
pub fn subtract_baseline_set(
    set: &MeasurementSet,
    b: &IdleBaseline,
) -> Result<(MeasurementSet, Vec<String>), CalibrationError> {
    if set.machine != b.machine {
        return Err(CalibrationError::MachineMismatch {
            baseline: b.machine.clone(),
            dataset: set.machine.clone(),
        });
    }
    let mut warnings = Vec::new();
    let mut measurements = Vec::with_capacity(set.measurements.len());
    for m in &set.measurements {
        let a = subtract_baseline(m, b)?;
        if a.clamped {
            warnings.push(format!(
                "{}/{}: idle baseline exceeds measured energy, clamped to 0 J",
                set.problem_id, m.solution_id
            ));
        }
        measurements.push(a.measurement);
    }
    Ok((
        MeasurementSet {
            measurements,
            ..set.clone()
        },
        warnings,
    ))
}
