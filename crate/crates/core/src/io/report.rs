//! Profile, outlier, Spearman and classification reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{fmt_f64, write_json, write_text, IoError};
use crate::classifier::ClassificationTable;
use crate::profile::{OutlierReport, OutlierTier, ProblemProfile, ProfilePoint};

/// Groups with a Spearman factor below this are highlighted.
pub const SPEARMAN_HIGHLIGHT: f64 = 0.95;

pub const PROFILES_HEADER: &str = "problem_id,machine,config_tag,fit_mode,diagnostic_only,baseline_adjusted,n,slope_a,sse,sigma_e,spearman,spearman_flagged,free_intercept_b,outliers_low,outliers_medium,outliers_high";
pub const OUTLIERS_HEADER: &str = "problem_id,machine,config_tag,solution_id,t_ms,c_j,c_sd_j,residual,low_threshold,medium_threshold,high_threshold,tier,direction";

/// Everything computed for one (problem, machine, configuration) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub problem_id: String,
    pub machine: String,
    pub config_tag: String,
    pub baseline_adjusted: bool,
    pub points: Vec<ProfilePoint>,
    pub profile: ProblemProfile,
    pub outliers: OutlierReport,
}

impl GroupResult {
    /// File-name friendly `problem_machine_config` stem.
    pub fn slug(&self) -> String {
        format!("{}_{}_{}", self.problem_id, self.machine, self.config_tag)
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub spearman_threshold: f64,
    pub groups: Vec<GroupResult>,
}

/// Undefined correlations are flagged too.
pub fn spearman_flagged(rho: Option<f64>, threshold: f64) -> bool {
    rho.is_none_or(|r| r < threshold)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn profiles_csv(groups: &[GroupResult], threshold: f64) -> String {
    let mut out = String::from(PROFILES_HEADER);
    out.push('\n');
    for g in groups {
        let p = &g.profile;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&g.problem_id),
            csv_field(&g.machine),
            csv_field(&g.config_tag),
            p.fit_mode,
            p.fit_mode.is_diagnostic(),
            g.baseline_adjusted,
            p.n,
            fmt_f64(p.slope_a),
            fmt_f64(p.sse),
            fmt_f64(p.sigma_e),
            opt(p.spearman),
            spearman_flagged(p.spearman, threshold),
            opt(p.free_line.map(|l| l.intercept)),
            g.outliers.count(OutlierTier::Low),
            g.outliers.count(OutlierTier::Medium),
            g.outliers.count(OutlierTier::High),
        );
    }
    out
}

pub fn outliers_csv(groups: &[GroupResult]) -> String {
    let mut out = String::from(OUTLIERS_HEADER);
    out.push('\n');
    for g in groups {
        for (p, e) in g.points.iter().zip(&g.outliers.entries) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&g.problem_id),
                csv_field(&g.machine),
                csv_field(&g.config_tag),
                csv_field(&e.solution_id),
                fmt_f64(p.t),
                fmt_f64(p.c),
                fmt_f64(p.c_sd),
                fmt_f64(e.residual),
                fmt_f64(e.low_threshold),
                fmt_f64(e.medium_threshold),
                fmt_f64(e.high_threshold),
                e.tier.as_str(),
                e.direction.as_str(),
            );
        }
    }
    out
}

/// Writes `profiles.csv` and `profiles.json` into `dir`.
pub fn write_profile_report(groups: &[GroupResult], threshold: f64, dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let csv = dir.join("profiles.csv");
    let json = dir.join("profiles.json");
    write_text(&csv, &profiles_csv(groups, threshold))?;
    write_json(
        &ProfileReport {
            spearman_threshold: threshold,
            groups: groups.to_vec(),
        },
        &json,
    )?;
    Ok(vec![csv, json])
}

/// Problem × (machine, config) table of Spearman factors, as CSV and Markdown.
/// Flagged entries are bold in the Markdown version.
pub fn spearman_tables(groups: &[GroupResult], threshold: f64) -> (String, String) {
    let columns: BTreeSet<(String, String)> = groups
        .iter()
        .map(|g| (g.machine.clone(), g.config_tag.clone()))
        .collect();
    let mut cells: BTreeMap<&str, BTreeMap<(String, String), Option<f64>>> = BTreeMap::new();
    for g in groups {
        cells
            .entry(&g.problem_id)
            .or_default()
            .insert((g.machine.clone(), g.config_tag.clone()), g.profile.spearman);
    }

    let mut csv = String::from("problem_id");
    let mut md = String::from("| problem |");
    let mut rule = String::from("|---|");
    for (m, c) in &columns {
        let _ = write!(csv, ",{}", csv_field(&format!("{m} {c}")));
        let _ = write!(md, " {m} `{c}` |");
        rule.push_str("---:|");
    }
    csv.push('\n');
    let _ = write!(md, "\n{rule}\n");

    for (problem, row) in &cells {
        csv.push_str(&csv_field(problem));
        let _ = write!(md, "| {problem} |");
        for col in &columns {
            match row.get(col) {
                Some(rho) => {
                    let _ = write!(csv, ",{}", opt(*rho));
                    let text = rho.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into());
                    if spearman_flagged(*rho, threshold) {
                        let _ = write!(md, " **{text}** |");
                    } else {
                        let _ = write!(md, " {text} |");
                    }
                }
                None => {
                    csv.push(',');
                    md.push_str("  |");
                }
            }
        }
        csv.push('\n');
        md.push('\n');
    }
    let _ = write!(md, "\nBold: Spearman factor below {threshold}.\n");
    (csv, md)
}

/// Training rows × test columns of relative differences (%).
pub fn classification_csv(table: &ClassificationTable) -> String {
    let mut out = String::from("train_problem");
    for t in &table.test_ids {
        let _ = write!(out, ",{}", csv_field(t));
    }
    out.push('\n');
    for (id, row) in table.train_ids.iter().zip(&table.cells) {
        out.push_str(&csv_field(id));
        for v in row {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
