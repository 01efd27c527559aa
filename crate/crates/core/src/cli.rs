//! The `joulemark` command line.
//!
//! Exit codes: 0 success, 1 domain error (a JSON report goes to stderr),
//! 2 usage error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::backend::{powercap, Backend, BackendKind, PerfBackend, Powercap, SystimeBackend};
use crate::calibration::{fit_idle_slope, measure_idle, IdleBaseline};
use crate::classifier::{
    distance_table, normalize_slopes, normalize_test, success_curve, ClassificationTable, TestNormalization,
};
use crate::io::report::{classification_csv, outliers_csv, spearman_tables, write_profile_report, ProfileReport};
use crate::io::{emit_scatter_svg, load_manifest, read_json, write_json, write_samples_csv, write_text, GroupResult};
use crate::io::{SuiteManifest, SPEARMAN_HIGHLIGHT};
use crate::model::MeasurementSet;
use crate::orchestrator::{has_blockers, preflight_check, Finding, HostState, RunConfig};
use crate::pipeline::{analyze_sets, apply_baselines, measure_manifest, slopes_for_machine};
use crate::profile::{cross_machine_outliers, FitMode};

pub const LOCK_FILE: &str = ".joulemark.lock";

#[derive(Debug, Parser)]
#[command(name = "joulemark", version, about = "Energy profiling of solution programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the host and print findings as JSON
    Preflight(MeasureOpts),
    /// Measure the idle baseline with sleep runs
    Calibrate(CalibrateArgs),
    /// Run every solution of a manifest and write the dataset
    Measure(MeasureOpts),
    /// Fit energy profiles and grade outliers
    Fit(FitArgs),
    /// Collect outliers, including those shared by every machine
    Outliers(ProfilesArgs),
    /// Identify test sets by their profile slope
    Classify(ClassifyArgs),
    /// Spearman tables and scatter plots from fitted profiles
    Report(ProfilesArgs),
}

#[derive(Debug, Args)]
pub struct MeasureOpts {
    #[arg(long)]
    pub manifest: PathBuf,
    /// powercap-systime, perf or synthetic; defaults to the manifest's choice
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub reps: Option<u32>,
    #[arg(long)]
    pub single_core: bool,
    /// Seed for the synthetic backend
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run despite preflight findings
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub opts: MeasureOpts,
    /// Sleep durations in ms
    #[arg(long, value_delimiter = ',', default_value = "100,250,500,1000,2000")]
    pub durations: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// measurements.json written by `measure` (repeatable)
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    /// baseline.json written by `calibrate` (repeatable, one per machine)
    #[arg(long)]
    pub baseline: Vec<PathBuf>,
    #[arg(long, default_value = "ols")]
    pub fit_mode: FitMode,
    #[arg(long, default_value_t = SPEARMAN_HIGHLIGHT)]
    pub spearman_threshold: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfilesArgs {
    /// profiles.json written by `fit` (repeatable)
    #[arg(long, required = true)]
    pub profiles: Vec<PathBuf>,
    #[arg(long)]
    pub spearman_threshold: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// profiles.json of the training problems
    #[arg(long)]
    pub train: PathBuf,
    /// measurements.json of the test sets (repeatable)
    #[arg(long, required = true)]
    pub test: Vec<PathBuf>,
    /// Machine to classify on; needed when the training file has several
    #[arg(long)]
    pub machine: Option<String>,
    /// Inclusive range of candidate-set sizes, e.g. 1..7
    #[arg(long, value_parser = parse_n_range)]
    pub n_range: Option<(usize, usize)>,
    #[arg(long)]
    pub baseline: Vec<PathBuf>,
    #[arg(long, default_value = "ols")]
    pub fit_mode: FitMode,
    #[arg(long, value_enum, default_value = "independent")]
    pub test_normalization: NormalizationArg,
    /// Ignore the true problem of test sets and only rank candidates
    #[arg(long)]
    pub blind: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum NormalizationArg {
    Independent,
    TrainingMinimum,
}

impl From<NormalizationArg> for TestNormalization {
    fn from(v: NormalizationArg) -> Self {
        match v {
            NormalizationArg::Independent => TestNormalization::Independent,
            NormalizationArg::TrainingMinimum => TestNormalization::TrainingMinimum,
        }
    }
}

pub fn parse_n_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b: usize = b
        .trim()
        .trim_start_matches('=')
        .parse()
        .map_err(|_| format!("bad range end {b:?}"))?;
    if a == 0 || b < a {
        return Err(format!("range {s:?} must satisfy 1 <= A <= B"));
    }
    Ok((a, b))
}

/// A failure reported as `{"error": kind, "message": ..., "details": [...]}`.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl CliError {
    fn new(error: &'static str, message: impl ToString) -> Self {
        CliError {
            error,
            message: message.to_string(),
            details: Vec::new(),
        }
    }

    fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

macro_rules! err_from {
    ($($t:ty => $kind:literal),* $(,)?) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new($kind, e)
            }
        }
    )*};
}

err_from!(
    crate::io::IoError => "io",
    crate::orchestrator::RunError => "run",
    crate::calibration::CalibrationError => "calibration",
    crate::classifier::ClassifyError => "classify",
    crate::profile::ProfileError => "profile",
    crate::backend::BackendError => "backend",
);

type CmdResult = Result<Vec<PathBuf>, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Preflight(o) => cmd_preflight(&o),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Measure(o) => cmd_measure(&o),
        Command::Fit(a) => cmd_fit(&a),
        Command::Outliers(a) => cmd_outliers(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(files) => {
            let mut out = std::io::stdout().lock();
            for f in files {
                let _ = writeln!(out, "{}", f.display());
            }
            0
        }
        Err(e) => {
            let text = serde_json::to_string(&e).unwrap_or_else(|_| e.message.clone());
            eprintln!("{text}");
            1
        }
    }
}

fn warn(lines: &[String]) {
    for l in lines {
        eprintln!("warning: {l}");
    }
}

// ---------------------------------------------------------------------------
// Measurement

struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::new(
                "locked",
                format!(
                    "another measurement is using {} (remove the lock file if it is stale)",
                    path.display()
                ),
            )),
            Err(e) => Err(CliError::new("io", format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Prepared {
    manifest: SuiteManifest,
    base: PathBuf,
    config: RunConfig,
}

fn prepare(o: &MeasureOpts) -> Result<Prepared, CliError> {
    let (manifest, base) = load_manifest(&o.manifest)?;
    let mut config = manifest.config.clone();
    if let Some(b) = o.backend {
        config.backend = b;
    }
    if let Some(r) = o.reps {
        config.repetitions = r;
    }
    config.single_core |= o.single_core;
    Ok(Prepared { manifest, base, config })
}

fn findings_for(config: &RunConfig) -> Vec<Finding> {
    let host = HostState::probe(config.backend, &powercap::default_root());
    preflight_check(config, &host)
}

/// Blockers always stop a run; with `--single-core`, so does a host that
/// still has other cores online. `--force` overrides both.
fn gate(config: &RunConfig, findings: &[Finding], force: bool) -> Result<(), CliError> {
    let stopping: Vec<&Finding> = findings
        .iter()
        .filter(|f| has_blockers(std::slice::from_ref(*f)) || (config.single_core && f.code == "cores-online"))
        .collect();
    if stopping.is_empty() || force {
        return Ok(());
    }
    let details = stopping
        .iter()
        .map(|f| {
            if f.commands.is_empty() {
                format!("{}: {}", f.code, f.message)
            } else {
                format!("{}: {} (run: {})", f.code, f.message, f.commands.join("; "))
            }
        })
        .collect();
    Err(CliError::new("preflight", "preflight check failed; rerun with --force to ignore").with_details(details))
}

fn make_backend(p: &Prepared, seed: Option<u64>) -> Result<Box<dyn Backend>, CliError> {
    let timeout = Duration::from_secs_f64(p.config.timeout_s.max(0.001));
    Ok(match p.config.backend {
        BackendKind::Synthetic => Box::new(p.manifest.synthetic_backend(seed)?),
        BackendKind::PowercapSystime => {
            Box::new(SystimeBackend::new(Powercap::from_env(), timeout, Some(p.base.clone())))
        }
        BackendKind::Perf => Box::new(PerfBackend::new(timeout, Some(p.base.clone()))),
    })
}

fn cmd_preflight(o: &MeasureOpts) -> CmdResult {
    let p = prepare(o)?;
    let findings = findings_for(&p.config);
    println!("{}", serde_json::to_string_pretty(&findings).unwrap_or_default());
    gate(&p.config, &findings, o.force)?;
    Ok(vec![])
}

fn cmd_measure(o: &MeasureOpts) -> CmdResult {
    let p = prepare(o)?;
    let findings = findings_for(&p.config);
    gate(&p.config, &findings, o.force)?;
    let _lock = Lock::acquire(&o.out)?;
    let mut backend = make_backend(&p, o.seed)?;
    let run = measure_manifest(&p.manifest, &p.config, backend.as_mut())?;
    warn(&run.warnings);

    let samples = o.out.join("samples.csv");
    let sets = o.out.join("measurements.json");
    write_samples_csv(&run.samples, &samples)?;
    write_json(&run.sets, &sets)?;

    let failed: Vec<String> = run
        .sets
        .iter()
        .flat_map(|s| {
            s.failures
                .iter()
                .map(move |f| format!("{}/{}: {}", s.problem_id, f.solution_id, f.error))
        })
        .collect();
    if !failed.is_empty() {
        return Err(CliError::new(
            "invalid-samples",
            format!("{} solution(s) failed; dataset is partial", failed.len()),
        )
        .with_details(failed));
    }
    Ok(vec![samples, sets])
}

fn cmd_calibrate(a: &CalibrateArgs) -> CmdResult {
    let p = prepare(&a.opts)?;
    let findings = findings_for(&p.config);
    gate(&p.config, &findings, a.opts.force)?;
    let _lock = Lock::acquire(&a.opts.out)?;
    let mut backend = make_backend(&p, a.opts.seed)?;
    let passes = a.opts.reps.unwrap_or(1).max(1) as usize;
    let durations: Vec<f64> = (0..passes).flat_map(|_| a.durations.iter().copied()).collect();
    let samples = measure_idle(&durations, backend.as_mut())?;
    let baseline: IdleBaseline = fit_idle_slope(&p.manifest.machine.id, &samples)?;
    let path = a.opts.out.join("baseline.json");
    write_json(&baseline, &path)?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// Analysis

fn load_sets(paths: &[PathBuf], baselines: &[PathBuf]) -> Result<Vec<MeasurementSet>, CliError> {
    let mut sets = Vec::new();
    for p in paths {
        let mut s: Vec<MeasurementSet> = read_json(p)?;
        sets.append(&mut s);
    }
    let partial: Vec<String> = sets
        .iter()
        .filter(|s| s.is_partial())
        .map(|s| {
            format!(
                "{} on {} is partial ({} failed solution(s))",
                s.problem_id,
                s.machine,
                s.failures.len()
            )
        })
        .collect();
    warn(&partial);
    let baselines: Vec<IdleBaseline> = baselines.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    let (sets, warnings) = apply_baselines(&sets, &baselines)?;
    warn(&warnings);
    Ok(sets)
}

fn fit_groups(sets: &[MeasurementSet], mode: FitMode) -> Result<Vec<GroupResult>, CliError> {
    let (groups, failed) = analyze_sets(sets, mode);
    if !failed.is_empty() {
        let details = failed
            .iter()
            .map(|(p, m, c, e)| format!("{p} on {m} ({c}): {e}"))
            .collect();
        return Err(CliError::new(
            "degenerate-groups",
            format!("{} group(s) could not be fitted", failed.len()),
        )
        .with_details(details));
    }
    Ok(groups)
}

fn cmd_fit(a: &FitArgs) -> CmdResult {
    let sets = load_sets(&a.dataset, &a.baseline)?;
    let groups = fit_groups(&sets, a.fit_mode)?;
    let mut files = write_profile_report(&groups, a.spearman_threshold, &a.out)?;
    let outliers = a.out.join("outliers.csv");
    write_text(&outliers, &outliers_csv(&groups))?;
    files.push(outliers);
    files.extend(write_plots(&groups, &a.out)?);
    Ok(files)
}

fn write_plots(groups: &[GroupResult], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for g in groups {
        let path = out.join("plots").join(format!("{}.svg", g.slug()));
        emit_scatter_svg(g, &path)?;
        files.push(path);
    }
    Ok(files)
}

fn load_profiles(paths: &[PathBuf]) -> Result<(Vec<GroupResult>, f64), CliError> {
    let mut groups = Vec::new();
    let mut threshold = SPEARMAN_HIGHLIGHT;
    for p in paths {
        let r: ProfileReport = read_json(p)?;
        threshold = r.spearman_threshold;
        groups.extend(r.groups);
    }
    groups.sort_by(|a, b| (&a.problem_id, &a.machine, &a.config_tag).cmp(&(&b.problem_id, &b.machine, &b.config_tag)));
    Ok((groups, threshold))
}

fn cmd_outliers(a: &ProfilesArgs) -> CmdResult {
    let (groups, _) = load_profiles(&a.profiles)?;
    let csv = a.out.join("outliers.csv");
    write_text(&csv, &outliers_csv(&groups))?;

    // per (problem, config): machine → report
    let mut by_problem: BTreeMap<(String, String), BTreeMap<String, crate::profile::OutlierReport>> = BTreeMap::new();
    for g in &groups {
        by_problem
            .entry((g.problem_id.clone(), g.config_tag.clone()))
            .or_default()
            .insert(g.machine.clone(), g.outliers.clone());
    }
    let mut cross = Vec::new();
    for ((problem, config), reports) in &by_problem {
        if reports.len() < 2 {
            continue;
        }
        match cross_machine_outliers(reports) {
            Ok(list) => {
                for o in list {
                    cross.push(json!({ "problem_id": problem, "config_tag": config, "outlier": o }));
                }
            }
            Err(e) => warn(&[format!("{problem} ({config}): {e}")]),
        }
    }
    let path = a.out.join("cross_machine_outliers.json");
    write_json(&cross, &path)?;
    Ok(vec![csv, path])
}

fn cmd_report(a: &ProfilesArgs) -> CmdResult {
    let (groups, stored) = load_profiles(&a.profiles)?;
    let threshold = a.spearman_threshold.unwrap_or(stored);
    let (csv, md) = spearman_tables(&groups, threshold);
    let csv_path = a.out.join("spearman.csv");
    let md_path = a.out.join("spearman.md");
    write_text(&csv_path, &csv)?;
    write_text(&md_path, &md)?;
    let mut files = vec![csv_path, md_path];
    files.extend(write_plots(&groups, &a.out)?);
    Ok(files)
}

fn cmd_classify(a: &ClassifyArgs) -> CmdResult {
    let (train_groups, _) = load_profiles(std::slice::from_ref(&a.train))?;
    let machines: BTreeSet<&str> = train_groups.iter().map(|g| g.machine.as_str()).collect();
    let machine = match (&a.machine, machines.len()) {
        (Some(m), _) => m.clone(),
        (None, 1) => machines.iter().next().map(|m| m.to_string()).unwrap_or_default(),
        (None, 0) => return Err(CliError::new("classify", "training profiles are empty")),
        (None, _) => {
            return Err(
                CliError::new("classify", "training profiles cover several machines; pass --machine")
                    .with_details(machines.iter().map(|m| m.to_string()).collect()),
            )
        }
    };
    let train_slopes = slopes_for_machine(&train_groups, &machine);
    if train_slopes.len() < 2 {
        return Err(CliError::new(
            "classify",
            format!(
                "need at least 2 training problems on {machine}, found {}",
                train_slopes.len()
            ),
        ));
    }

    let sets: Vec<MeasurementSet> = load_sets(&a.test, &a.baseline)?
        .into_iter()
        .filter(|s| s.machine == machine)
        .collect();
    let test_groups = fit_groups(&sets, a.fit_mode)?;
    let mut test_slopes = BTreeMap::new();
    for g in &test_groups {
        if test_slopes.insert(g.problem_id.clone(), g.profile.slope_a).is_some() {
            return Err(CliError::new(
                "classify",
                format!("test set {} appears more than once", g.problem_id),
            ));
        }
    }
    if test_slopes.is_empty() {
        return Err(CliError::new("classify", format!("no test sets measured on {machine}")));
    }

    let train = normalize_slopes(&machine, &train_slopes)?;
    let test = normalize_test(&train, &test_slopes, a.test_normalization.into())?;
    let mut table: ClassificationTable = distance_table(&train, &test);
    let rows = table.train_ids.len();
    let (from, to) = a.n_range.unwrap_or((1, rows));
    if to > rows {
        return Err(CliError::new(
            "classify",
            format!("n-range end {to} exceeds the {rows} training problems"),
        ));
    }

    let mut summary = json!({
        "machine": machine,
        "test_normalization": TestNormalization::from(a.test_normalization),
        "n_range": [from, to],
        "train": train,
        "test": test,
    });
    let mut candidates = BTreeMap::new();
    for t in &table.test_ids {
        let ranked = table.ranked(t)?;
        let top: Vec<_> = ranked
            .into_iter()
            .take(to)
            .map(|(id, d)| json!({"problem_id": id, "difference_pct": d}))
            .collect();
        candidates.insert(t.clone(), top);
    }
    summary["candidates"] = json!(candidates);

    if !a.blind {
        let unknown: Vec<String> = table
            .test_ids
            .iter()
            .filter(|t| !train_slopes.contains_key(*t))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(
                CliError::new("classify", "test sets without a matching training problem; use --blind")
                    .with_details(unknown),
            );
        }
        let truth = table.test_ids.iter().map(|t| (t.clone(), t.clone())).collect();
        table = table.with_ground_truth(truth);
        let curve = success_curve(&table, from, to)?;
        let ranks: BTreeMap<&String, Option<usize>> = table
            .test_ids
            .iter()
            .map(|t| table.truth_rank(t).map(|r| (t, r)))
            .collect::<Result<_, _>>()?;
        summary["success"] = json!(curve
            .iter()
            .map(|(n, s)| (n.to_string(), *s))
            .collect::<BTreeMap<_, _>>());
        summary["test_count"] = json!(table.test_ids.len());
        summary["truth_rank"] = json!(ranks);
    }

    let csv = a.out.join("classification.csv");
    let json_path = a.out.join("classification.json");
    write_text(&csv, &classification_csv(&table))?;
    write_json(&summary, &json_path)?;
    Ok(vec![csv, json_path])
}
