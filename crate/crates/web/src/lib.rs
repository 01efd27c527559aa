//! Browser demo. Every exported function takes plain values and returns a
//! JSON string: either the result object or `{"error": "..."}`.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use joulemark::calibration::{fit_idle_slope, measure_idle};
use joulemark::classifier::{distance_table, normalize_slopes, success_curve};
use joulemark::io::render_scatter_svg;
use joulemark::pipeline::{analyze_set, apply_baselines, measure_manifest};
use joulemark::profile::{classify_outliers, fit, FitMode, ProfilePoint};
use joulemark::scenario::{uniform_slopes, ScenarioSpec};

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Parses `id,t,c[,t_sd,c_sd]` lines. Blank lines, `#` comments and a header
/// row starting with a non-number in the `t` column are skipped.
pub fn parse_points(text: &str) -> Result<Vec<ProfilePoint>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split([',', ';', '\t']).map(str::trim).collect();
        if f.len() < 3 {
            return Err(format!("line {}: expected id,t,c[,t_sd,c_sd]", i + 1));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("line {}: {what} {s:?} is not a number", i + 1))
        };
        if out.is_empty() && f[1].parse::<f64>().is_err() {
            continue;
        }
        let sd = |k: usize, what: &str| f.get(k).filter(|s| !s.is_empty()).map_or(Ok(0.0), |s| num(s, what));
        out.push(ProfilePoint::new(
            f[0],
            num(f[1], "t")?,
            num(f[2], "c")?,
            sd(3, "t_sd")?,
            sd(4, "c_sd")?,
        ));
    }
    Ok(out)
}

pub fn fit_points_json(text: &str, mode: &str) -> Result<serde_json::Value, String> {
    let mode: FitMode = mode.parse()?;
    let points = parse_points(text)?;
    let profile = fit(&points, mode).map_err(|e| e.to_string())?;
    let outliers = classify_outliers(&points, &profile);
    let svg = render_scatter_svg("Pasted points", &points, &profile, &outliers);
    Ok(json!({ "profile": profile, "outliers": outliers, "svg": svg }))
}

/// Fits pasted `(t, c)` points and draws them.
#[wasm_bindgen]
pub fn fit_points(text: &str, mode: &str) -> String {
    respond(fit_points_json(text, mode))
}

pub fn synthetic_profile_json(
    active_w: f64,
    idle_w: f64,
    noise_pct: f64,
    solutions: u32,
    seed: u64,
    subtract_idle: bool,
) -> Result<serde_json::Value, String> {
    if !(2..=500).contains(&solutions) {
        return Err("solutions must be between 2 and 500".into());
    }
    let spec = ScenarioSpec {
        solutions_per_problem: solutions as usize,
        idle_power_w: idle_w,
        noise_rel: noise_pct / 100.0,
        seed,
        ..ScenarioSpec::new("browser", vec![("demo".into(), active_w / 1e3)])
    };
    let manifest = spec.manifest();
    let mut backend = manifest.synthetic_backend(None).map_err(|e| e.to_string())?;
    let run = measure_manifest(&manifest, &manifest.config, &mut backend).map_err(|e| e.to_string())?;
    let mut sets = run.sets;
    let mut idle_slope = None;
    if subtract_idle {
        let idle = measure_idle(&[100.0, 250.0, 500.0, 1000.0, 2000.0], &mut backend).map_err(|e| e.to_string())?;
        let baseline = fit_idle_slope("browser", &idle).map_err(|e| e.to_string())?;
        idle_slope = Some(baseline.idle_slope_j_per_ms);
        sets = apply_baselines(&sets, &[baseline]).map_err(|e| e.to_string())?.0;
    }
    let g = analyze_set(&sets[0], FitMode::Ols).map_err(|e| e.to_string())?;
    let title = format!("Synthetic suite: {active_w} W active, {idle_w} W idle, {noise_pct}% noise");
    let svg = render_scatter_svg(&title, &g.points, &g.profile, &g.outliers);
    Ok(json!({
        "true_slope": (active_w + if subtract_idle { 0.0 } else { idle_w }) / 1e3,
        "idle_slope": idle_slope,
        "profile": g.profile,
        "outliers": g.outliers,
        "svg": svg,
    }))
}

/// Measures a synthetic suite, optionally removes the idle baseline, fits it.
#[wasm_bindgen]
pub fn synthetic_profile(
    active_w: f64,
    idle_w: f64,
    noise_pct: f64,
    solutions: u32,
    seed: u32,
    subtract_idle: bool,
) -> String {
    respond(synthetic_profile_json(
        active_w,
        idle_w,
        noise_pct,
        solutions,
        seed.into(),
        subtract_idle,
    ))
}

pub fn classification_json(
    problems: u32,
    spread: f64,
    noise_pct: f64,
    test_size: u32,
    seed: u64,
) -> Result<serde_json::Value, String> {
    if !(2..=40).contains(&problems) {
        return Err("problems must be between 2 and 40".into());
    }
    if !(spread.is_finite() && spread > 1.0) {
        return Err("largest normalized slope must be above 1".into());
    }
    if !(2..=200).contains(&test_size) {
        return Err("test set size must be between 2 and 200".into());
    }
    let n = problems as usize;
    let slopes = uniform_slopes(n, 0.00909, 0.00909 * spread);
    let measure = |seed: u64, solutions: usize| -> Result<BTreeMap<String, f64>, String> {
        let spec = ScenarioSpec {
            seed,
            noise_rel: noise_pct / 100.0,
            solutions_per_problem: solutions,
            ..ScenarioSpec::new("browser", slopes.clone())
        };
        let manifest = spec.manifest();
        let mut backend = manifest.synthetic_backend(None).map_err(|e| e.to_string())?;
        let run = measure_manifest(&manifest, &manifest.config, &mut backend).map_err(|e| e.to_string())?;
        run.sets
            .iter()
            .map(|s| analyze_set(s, FitMode::Ols).map(|g| (g.problem_id, g.profile.slope_a)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())
    };
    let train =
        normalize_slopes("browser", &measure(seed.wrapping_mul(2).wrapping_add(1), 30)?).map_err(|e| e.to_string())?;
    let test = normalize_slopes(
        "browser",
        &measure(seed.wrapping_mul(2).wrapping_add(2), test_size as usize)?,
    )
    .map_err(|e| e.to_string())?;
    let truth = test.normalized.keys().map(|k| (k.clone(), k.clone())).collect();
    let table = distance_table(&train, &test).with_ground_truth(truth);
    let curve = success_curve(&table, 1, n).map_err(|e| e.to_string())?;
    let ranks: BTreeMap<&String, Option<usize>> = table
        .test_ids
        .iter()
        .map(|t| table.truth_rank(t).map(|r| (t, r)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "train": train.normalized,
        "test": test.normalized,
        "table": table,
        "success": curve.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        "truth_rank": ranks,
    }))
}

/// One classification trial: training and test suites, distance table and success curve.
#[wasm_bindgen]
pub fn classification_trial(problems: u32, spread: f64, noise_pct: f64, test_size: u32, seed: u32) -> String {
    respond(classification_json(problems, spread, noise_pct, test_size, seed.into()))
}
