//! Energy consumption profiles.
//!
//! A profile is the slope `a` of `ĉ = a·t` fitted through the origin to one
//! group's `(t_i, c_i)` points, together with the residual spread
//! `σ_e = √(SSE / (n − 2))` and the Spearman rank correlation of `t` and `c`.
//!
//! Residuals use the predicted-minus-observed convention `e_i = a·t_i − c_i`,
//! so a negative residual means the solution consumed more than its running
//! time predicts. `σ_e` keeps the `n − 2` divisor even though the origin model
//! has a single parameter.
//!
//! Outlier tiers widen the `2σ_e` band by each point's own energy spread
//! `σ_c,i`; the spread of `t_i` is not used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SolutionMeasurement;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub solution_id: String,
    /// Mean CPU time, ms.
    pub t: f64,
    /// Mean energy, J.
    pub c: f64,
    pub t_sd: f64,
    pub c_sd: f64,
}

impl From<&SolutionMeasurement> for ProfilePoint {
    fn from(m: &SolutionMeasurement) -> Self {
        ProfilePoint {
            solution_id: m.solution_id.clone(),
            t: m.t_mean_ms,
            c: m.c_mean_j,
            t_sd: m.t_sd_ms,
            c_sd: m.c_sd_j,
        }
    }
}

impl ProfilePoint {
    pub fn new(solution_id: impl Into<String>, t: f64, c: f64, t_sd: f64, c_sd: f64) -> Self {
        ProfilePoint {
            solution_id: solution_id.into(),
            t,
            c,
            t_sd,
            c_sd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    #[default]
    Ols,
    /// Weights `1/σ_c`.
    WlsC,
    /// Weights `1/(σ_t·σ_c)`.
    WlsTc,
}

impl FitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMode::Ols => "ols",
            FitMode::WlsC => "wls-c",
            FitMode::WlsTc => "wls-tc",
        }
    }

    /// Weighted fits are kept as a diagnostic; their slopes vary too much
    /// between configurations to drive outlier detection.
    pub fn is_diagnostic(self) -> bool {
        self != FitMode::Ols
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ols" => Ok(FitMode::Ols),
            "wls-c" => Ok(FitMode::WlsC),
            "wls-tc" => Ok(FitMode::WlsTc),
            other => Err(format!("unknown fit mode: {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    InvCsd,
    InvTsdCsd,
}

/// Ordinary least squares with a free intercept. Recorded for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeLine {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemProfile {
    /// J/ms
    pub slope_a: f64,
    pub sse: f64,
    pub sigma_e: f64,
    /// `None` when all `t` or all `c` are equal.
    pub spearman: Option<f64>,
    pub n: usize,
    pub fit_mode: FitMode,
    pub free_line: Option<FreeLine>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("degenerate points: {0}")]
    DegeneratePoints(String),
    #[error("invalid point {solution_id}: {reason}")]
    InvalidPoint { solution_id: String, reason: String },
    #[error("zero spread for {solution_id} leaves its weight undefined")]
    ZeroWeightDenominator { solution_id: String },
    #[error("ranks are degenerate: {0}")]
    DegenerateRanks(String),
    #[error("outlier comparison needs at least two machines")]
    TooFewMachines,
    #[error("machines disagree on the solution set: {0}")]
    MismatchedUniverse(String),
}

fn check_points(points: &[ProfilePoint]) -> Result<(), ProfileError> {
    for p in points {
        let bad = |reason: &str| ProfileError::InvalidPoint {
            solution_id: p.solution_id.clone(),
            reason: reason.to_string(),
        };
        if !(p.t.is_finite() && p.t > 0.0) {
            return Err(bad("t must be finite and > 0"));
        }
        if !(p.c.is_finite() && p.c >= 0.0) {
            return Err(bad("c must be finite and >= 0"));
        }
        if !(p.t_sd >= 0.0 && p.c_sd >= 0.0) {
            return Err(bad("standard deviations must be >= 0"));
        }
    }
    Ok(())
}

/// `e_i = a·t_i − c_i`, in point order.
pub fn residuals(points: &[ProfilePoint], a: f64) -> Vec<f64> {
    points.iter().map(|p| a * p.t - p.c).collect()
}

/// `√(SSE / (n − 2))`; `None` for fewer than three residuals.
pub fn residual_sd(residuals: &[f64]) -> Option<f64> {
    let n = residuals.len();
    (n > 2).then(|| (residuals.iter().map(|e| e * e).sum::<f64>() / (n - 2) as f64).sqrt())
}

fn free_line(points: &[ProfilePoint]) -> Option<FreeLine> {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.t).sum::<f64>() / n;
    let mc = points.iter().map(|p| p.c).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.t - mt).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let stc: f64 = points.iter().map(|p| (p.t - mt) * (p.c - mc)).sum();
    let slope = stc / stt;
    Some(FreeLine {
        slope,
        intercept: mc - slope * mt,
    })
}

fn profile_at(points: &[ProfilePoint], slope_a: f64, fit_mode: FitMode) -> ProblemProfile {
    let e = residuals(points, slope_a);
    let sse = e.iter().map(|x| x * x).sum();
    ProblemProfile {
        slope_a,
        sse,
        sigma_e: residual_sd(&e).unwrap_or(0.0),
        spearman: spearman(points).ok(),
        n: points.len(),
        fit_mode,
        free_line: free_line(points),
    }
}

/// `a = Σ t_i c_i / Σ t_i²`.
pub fn fit_ols_origin(points: &[ProfilePoint]) -> Result<ProblemProfile, ProfileError> {
    if points.len() < 3 {
        return Err(ProfileError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    check_points(points)?;
    let stt: f64 = points.iter().map(|p| p.t * p.t).sum();
    if !(stt > 0.0 && stt.is_finite()) {
        return Err(ProfileError::DegeneratePoints(
            "sum of squared times is not positive".into(),
        ));
    }
    let stc: f64 = points.iter().map(|p| p.t * p.c).sum();
    Ok(profile_at(points, stc / stt, FitMode::Ols))
}

fn weight(p: &ProfilePoint, mode: WeightMode) -> Result<f64, ProfileError> {
    let denom = match mode {
        WeightMode::InvCsd => p.c_sd,
        WeightMode::InvTsdCsd => p.t_sd * p.c_sd,
    };
    if denom > 0.0 && denom.is_finite() {
        Ok(1.0 / denom)
    } else {
        Err(ProfileError::ZeroWeightDenominator {
            solution_id: p.solution_id.clone(),
        })
    }
}

/// `a = Σ w_i t_i c_i / Σ w_i t_i²`.
pub fn wls_origin_slope(points: &[ProfilePoint], mode: WeightMode) -> Result<f64, ProfileError> {
    if points.is_empty() {
        return Err(ProfileError::TooFewPoints { need: 1, got: 0 });
    }
    check_points(points)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in points {
        let w = weight(p, mode)?;
        num += w * p.t * p.c;
        den += w * p.t * p.t;
    }
    Ok(num / den)
}

pub fn fit_wls_origin(points: &[ProfilePoint], mode: WeightMode) -> Result<ProblemProfile, ProfileError> {
    if points.len() < 3 {
        return Err(ProfileError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    let a = wls_origin_slope(points, mode)?;
    let fit_mode = match mode {
        WeightMode::InvCsd => FitMode::WlsC,
        WeightMode::InvTsdCsd => FitMode::WlsTc,
    };
    Ok(profile_at(points, a, fit_mode))
}

pub fn fit(points: &[ProfilePoint], mode: FitMode) -> Result<ProblemProfile, ProfileError> {
    match mode {
        FitMode::Ols => fit_ols_origin(points),
        FitMode::WlsC => fit_wls_origin(points, WeightMode::InvCsd),
        FitMode::WlsTc => fit_wls_origin(points, WeightMode::InvTsdCsd),
    }
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation `cov(R(x), R(y)) / (σ_R(x) σ_R(y))` with population moments.
pub fn spearman_xy(x: &[f64], y: &[f64]) -> Result<f64, ProfileError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(ProfileError::DegenerateRanks(format!(
            "{} vs {} values",
            x.len(),
            y.len()
        )));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(ProfileError::DegenerateRanks("a variable is constant".into()));
    }
    // the 1/n factors cancel
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(points: &[ProfilePoint]) -> Result<f64, ProfileError> {
    let t: Vec<f64> = points.iter().map(|p| p.t).collect();
    let c: Vec<f64> = points.iter().map(|p| p.c).collect();
    spearman_xy(&t, &c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierTier {
    None,
    Low,
    Medium,
    High,
}

impl OutlierTier {
    pub fn as_str(self) -> &'static str {
        match self {
            OutlierTier::None => "none",
            OutlierTier::Low => "low",
            OutlierTier::Medium => "medium",
            OutlierTier::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Consumed more than the profile predicts.
    Above,
    Below,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Above => "above",
            Direction::Below => "below",
        }
    }
}

/// Tier of a residual given the group's `σ_e` and the point's `σ_c`.
pub fn tier_for(residual: f64, sigma_e: f64, c_sd: f64) -> OutlierTier {
    let r = residual.abs();
    if r > 2.0 * sigma_e + 2.0 * c_sd {
        OutlierTier::High
    } else if r > 2.0 * sigma_e + c_sd {
        OutlierTier::Medium
    } else if r > 2.0 * sigma_e {
        OutlierTier::Low
    } else {
        OutlierTier::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierEntry {
    pub solution_id: String,
    pub residual: f64,
    pub tier: OutlierTier,
    pub direction: Direction,
    /// `2σ_e`
    pub low_threshold: f64,
    /// `2σ_e + σ_c,i`
    pub medium_threshold: f64,
    /// `2σ_e + 2σ_c,i`
    pub high_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub slope_a: f64,
    pub sigma_e: f64,
    pub entries: Vec<OutlierEntry>,
}

impl OutlierReport {
    pub fn count(&self, tier: OutlierTier) -> usize {
        self.entries.iter().filter(|e| e.tier == tier).count()
    }

    pub fn get(&self, solution_id: &str) -> Option<&OutlierEntry> {
        self.entries.iter().find(|e| e.solution_id == solution_id)
    }
}

pub fn classify_outliers(points: &[ProfilePoint], profile: &ProblemProfile) -> OutlierReport {
    let s = profile.sigma_e;
    let entries = points
        .iter()
        .map(|p| {
            let residual = profile.slope_a * p.t - p.c;
            OutlierEntry {
                solution_id: p.solution_id.clone(),
                residual,
                tier: tier_for(residual, s, p.c_sd),
                direction: if p.c > profile.slope_a * p.t {
                    Direction::Above
                } else {
                    Direction::Below
                },
                low_threshold: 2.0 * s,
                medium_threshold: 2.0 * s + p.c_sd,
                high_threshold: 2.0 * s + 2.0 * p.c_sd,
            }
        })
        .collect();
    OutlierReport {
        slope_a: profile.slope_a,
        sigma_e: s,
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMachineOutlier {
    pub solution_id: String,
    pub tiers: BTreeMap<String, OutlierTier>,
    pub directions_agree: bool,
}

/// Solutions that are outliers on every machine and at least medium on one.
pub fn cross_machine_outliers(
    reports: &BTreeMap<String, OutlierReport>,
) -> Result<Vec<CrossMachineOutlier>, ProfileError> {
    if reports.len() < 2 {
        return Err(ProfileError::TooFewMachines);
    }
    let universes: Vec<(&String, BTreeSet<&str>)> = reports
        .iter()
        .map(|(m, r)| (m, r.entries.iter().map(|e| e.solution_id.as_str()).collect()))
        .collect();
    let (first_machine, universe) = &universes[0];
    for (m, u) in &universes[1..] {
        if u != universe {
            let diff: Vec<&str> = universe.symmetric_difference(u).copied().collect();
            return Err(ProfileError::MismatchedUniverse(format!(
                "{first_machine} vs {m}: {}",
                diff.join(", ")
            )));
        }
    }

    let mut out = Vec::new();
    for id in universe {
        let entries: Vec<(&String, &OutlierEntry)> = reports
            .iter()
            .map(|(m, r)| (m, r.get(id).expect("universe checked")))
            .collect();
        let all_low = entries.iter().all(|(_, e)| e.tier >= OutlierTier::Low);
        let any_medium = entries.iter().any(|(_, e)| e.tier >= OutlierTier::Medium);
        if all_low && any_medium {
            let d0 = entries[0].1.direction;
            out.push(CrossMachineOutlier {
                solution_id: id.to_string(),
                tiers: entries.iter().map(|(m, e)| ((*m).clone(), e.tier)).collect(),
                directions_agree: entries.iter().all(|(_, e)| e.direction == d0),
            });
        }
    }
    Ok(out)
}
