//! Acceptance criteria. Runs without a test harness so that every criterion
//! prints exactly one PASS/FAIL line, then exits non-zero if any failed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use joulemark::backend::powercap::counter_delta_uj;
use joulemark::backend::{counter_delta, parse_perf_output, CounterSnapshot};
use joulemark::calibration::{fit_idle_slope, measure_idle};
use joulemark::classifier::{
    distance_table, normalize_slopes, relative_difference_pct, success_count, ClassificationTable,
};
use joulemark::model::RunSample;
use joulemark::orchestrator::trim_and_aggregate;
use joulemark::pipeline::{analyze_set, apply_baselines, measure_manifest};
use joulemark::profile::{
    classify_outliers, fit_ols_origin, residual_sd, spearman_xy, FitMode, OutlierTier, ProblemProfile, ProfilePoint,
};
use joulemark::scenario::{uniform_slopes, ScenarioSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------

/// 30 solutions, slope 0.01 J/ms, 2 % noise, 10 reps: a within 1 %, ρ ≥ 0.99, < 5 s.
fn ols_recovery() -> Outcome {
    let start = Instant::now();
    let mut worst_err: f64 = 0.0;
    let mut worst_rho: f64 = 1.0;
    let seeds = 1..=20u64;
    for seed in seeds.clone() {
        let spec = ScenarioSpec {
            seed,
            ..ScenarioSpec::new("synth", vec![("p".into(), 0.01)])
        };
        let manifest = spec.manifest();
        let mut backend = manifest.synthetic_backend(None).map_err(|e| e.to_string())?;
        let run = measure_manifest(&manifest, &manifest.config, &mut backend).map_err(|e| e.to_string())?;
        let g = analyze_set(&run.sets[0], FitMode::Ols).map_err(|e| e.to_string())?;
        if g.points.len() != 30 || run.sets[0].measurements.iter().any(|m| m.kept_runs != 8) {
            return Err("suite shape is wrong".into());
        }
        worst_err = worst_err.max((g.profile.slope_a / 0.01 - 1.0).abs());
        worst_rho = worst_rho.min(g.profile.spearman.unwrap_or(f64::NAN));
    }
    let per_suite = start.elapsed() / 20;
    check(
        worst_err < 0.01 && worst_rho >= 0.99 && per_suite < Duration::from_secs(5),
        format!(
            "20 seeds: max |a/0.01 - 1| = {:.3}% (< 1%), min rho = {worst_rho:.4} (>= 0.99), {per_suite:?} per suite (< 5 s)",
            worst_err * 100.0
        ),
    )
}

/// 0.00909 and 0.01253 normalize to a maximum of 1.379 ± 0.001; 1.252 vs 1.255 differ by ≤ 0.3 %.
fn normalized_slopes() -> Outcome {
    let slopes: BTreeMap<String, f64> = [("1082".to_string(), 0.00909), ("1643".to_string(), 0.01253)].into();
    let t = normalize_slopes("hpelite", &slopes).map_err(|e| e.to_string())?;
    let max = t.normalized.values().copied().fold(0.0, f64::max);
    let min = t.normalized.values().copied().fold(f64::INFINITY, f64::min);

    let close: BTreeMap<String, f64> = [
        ("1082".to_string(), 0.00909),
        ("1071".to_string(), 0.00909 * 1.252),
        ("1636".to_string(), 0.00909 * 1.255),
    ]
    .into();
    let c = normalize_slopes("hpelite", &close).map_err(|e| e.to_string())?;
    let diff = relative_difference_pct(c.normalized["1071"], c.normalized["1636"]);
    check(
        (max - 1.379).abs() <= 0.001 && min == 1.0 && diff <= 0.3,
        format!("max = {max:.4} (1.379 ± 0.001), min = {min}, 1.252 vs 1.255 = {diff:.3}% (<= 0.3%)"),
    )
}

/// Residuals {1, -1, 2, -2}, n = 4: σe = √5 ± 1e-12.
fn sigma_e_closed_form() -> Outcome {
    let direct = residual_sd(&[1.0, -1.0, 2.0, -2.0]).ok_or("residual_sd undefined")?;
    // t = (1, 1, 2, 2), c = t - e fits a = 1 exactly, leaving those residuals
    let points: Vec<ProfilePoint> = [(1.0, 0.0), (1.0, 2.0), (2.0, 0.0), (2.0, 4.0)]
        .iter()
        .enumerate()
        .map(|(i, &(t, c))| ProfilePoint::new(format!("s{i}"), t, c, 0.0, 0.0))
        .collect();
    let fit = fit_ols_origin(&points).map_err(|e| e.to_string())?;
    let want = 5f64.sqrt();
    check(
        (direct - want).abs() <= 1e-12 && (fit.sigma_e - want).abs() <= 1e-12 && fit.slope_a == 1.0,
        format!(
            "sigma_e = {direct:.15} direct, {:.15} via fit (sqrt 5 = {want:.15})",
            fit.sigma_e
        ),
    )
}

fn oracle_tier(e: f64, sigma_e: f64, sigma_c: f64) -> OutlierTier {
    let thresholds = [2.0 * sigma_e, 2.0 * sigma_e + sigma_c, 2.0 * sigma_e + 2.0 * sigma_c];
    match thresholds.iter().filter(|&&th| e.abs() > th).count() {
        0 => OutlierTier::None,
        1 => OutlierTier::Low,
        2 => OutlierTier::Medium,
        _ => OutlierTier::High,
    }
}

/// Brute-force tiers over 1000 random (e, σe, σc) triples; high ⊆ medium ⊆ low.
fn outlier_tiers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut nesting = 0;
    let mut seen = BTreeMap::new();
    for i in 0..1000 {
        let sigma_e: f64 = rng.gen_range(0.0..2.0);
        let sigma_c: f64 = rng.gen_range(0.0..1.0);
        // every 10th triple sits exactly on a threshold
        let e = match i % 10 {
            0 => 2.0 * sigma_e,
            1 => -(2.0 * sigma_e + sigma_c),
            2 => 2.0 * sigma_e + 2.0 * sigma_c,
            _ => rng.gen_range(-8.0..8.0),
        };
        // with slope 0 and t = 1 the residual is exactly -c = e
        let point = ProfilePoint::new("s", 1.0, -e, 0.0, sigma_c);
        let profile = ProblemProfile {
            slope_a: 0.0,
            sse: 0.0,
            sigma_e,
            spearman: None,
            n: 1,
            fit_mode: FitMode::Ols,
            free_line: None,
        };
        let entry = &classify_outliers(std::slice::from_ref(&point), &profile).entries[0];
        let want = oracle_tier(e, sigma_e, sigma_c);
        if entry.tier != want || entry.residual != e {
            mismatches += 1;
        }
        let (low, med, high) = (
            e.abs() > entry.low_threshold,
            e.abs() > entry.medium_threshold,
            e.abs() > entry.high_threshold,
        );
        if (high && !med) || (med && !low) {
            nesting += 1;
        }
        *seen.entry(entry.tier.as_str()).or_insert(0) += 1;
    }
    check(
        mismatches == 0 && nesting == 0 && seen.len() == 4,
        format!("1000 triples: {mismatches} mismatches, {nesting} nesting violations, tiers seen {seen:?}"),
    )
}

/// Energies 1..10: mean 5.5, SD √6 ± 1e-12, 8 kept.
fn trim_rule() -> Outcome {
    let samples: Vec<RunSample> = (1..=10)
        .map(|i| RunSample {
            wall_ms: 100.0 + i as f64,
            cpu_ms: 100.0,
            energy_j: i as f64,
            run_index: (i * 7 % 10) as u32,
        })
        .collect();
    let m = trim_and_aggregate("s", &samples).map_err(|e| e.to_string())?;
    let kept: Vec<f64> = (2..=9).map(f64::from).collect();
    let mean = kept.iter().sum::<f64>() / 8.0;
    let sd = (kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
    check(
        m.c_mean_j == 5.5
            && (m.c_sd_j - 6f64.sqrt()).abs() <= 1e-12
            && m.kept_runs == 8
            && (sd - 6f64.sqrt()).abs() < 1e-15,
        format!(
            "mean = {}, sd = {:.15} (sqrt 6 = {:.15}), kept = {}",
            m.c_mean_j,
            m.c_sd_j,
            6f64.sqrt(),
            m.kept_runs
        ),
    )
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx.sqrt() * vy.sqrt()))
    }
}

/// 500 random datasets against brute-force rank correlation to 1e-12; monotone gives ±1 exactly.
fn spearman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut disagreements = 0;
    let mut tied = 0;
    for i in 0..500 {
        let n = rng.gen_range(3..40);
        let with_ties = i % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            if with_ties {
                f64::from(rng.gen_range(0..6))
            } else {
                rng.gen_range(0.0..1000.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        if with_ties {
            tied += 1;
        }
        match (spearman_xy(&x, &y).ok(), brute_spearman(&x, &y)) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => disagreements += 1,
        }
    }
    let mut exact = true;
    for n in 2..60 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let up: Vec<f64> = x.iter().map(|v| v.powi(3) + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v.exp()).collect();
        exact &= spearman_xy(&x, &up).ok() == Some(1.0) && spearman_xy(&x, &down).ok() == Some(-1.0);
    }
    check(
        worst <= 1e-12 && disagreements == 0 && exact,
        format!(
            "500 datasets ({tied} with ties): max |diff| = {worst:.2e} (<= 1e-12), {disagreements} definedness disagreements, monotone exact = {exact}"
        ),
    )
}

fn trial(seed: u64, noise: f64) -> Result<(usize, usize), String> {
    let problems = uniform_slopes(15, 0.00909, 0.00909 * 1.379);
    let measure = |seed: u64, solutions: usize| -> Result<BTreeMap<String, f64>, String> {
        let spec = ScenarioSpec {
            seed,
            noise_rel: noise,
            solutions_per_problem: solutions,
            ..ScenarioSpec::new("synth", problems.clone())
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
    let train = normalize_slopes("synth", &measure(seed * 2 + 1, 30)?).map_err(|e| e.to_string())?;
    let test = normalize_slopes("synth", &measure(seed * 2 + 2, 10)?).map_err(|e| e.to_string())?;
    let truth = test.normalized.keys().map(|k| (k.clone(), k.clone())).collect();
    let table: ClassificationTable = distance_table(&train, &test).with_ground_truth(truth);
    let s1 = success_count(&table, 1).map_err(|e| e.to_string())?;
    let s7 = success_count(&table, 7).map_err(|e| e.to_string())?;
    Ok((s1, s7))
}

/// 15 problems over [1, 1.379], test sets of 10 at 2 % noise: success(1) ≥ 3 and
/// success(7) = 15 in ≥ 90 % of 100 trials; zero noise gives success(1) = 15; < 30 s.
fn classification() -> Outcome {
    let start = Instant::now();
    let mut good = 0;
    let mut min_s1 = usize::MAX;
    let mut min_s7 = usize::MAX;
    for seed in 0..100 {
        let (s1, s7) = trial(seed, 0.02)?;
        if s1 >= 3 && s7 == 15 {
            good += 1;
        }
        min_s1 = min_s1.min(s1);
        min_s7 = min_s7.min(s7);
    }
    let (z1, _) = trial(1000, 0.0)?;
    let elapsed = start.elapsed();
    check(
        good >= 90 && z1 == 15 && elapsed < Duration::from_secs(30),
        format!(
            "{good}/100 trials pass (>= 90), min success(1) = {min_s1}, min success(7) = {min_s7}; zero-noise success(1) = {z1}; {elapsed:.2?} (< 30 s)"
        ),
    )
}

/// Fixture corpus: exact values or the named failure for each file.
fn perf_fixtures() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/perf");
    let expected: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for (file, want) in &expected {
        let text = std::fs::read_to_string(dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
        let got = parse_perf_output(&text).and_then(|r| r.normalized());
        match (want.get("error"), got) {
            (Some(reason), Err(e)) => {
                let line = want.get("line").and_then(|l| l.as_u64()).map(|l| l as usize);
                if e.reason != reason.as_str().unwrap_or_default() || e.line != line {
                    bad.push(format!("{file}: got {e}"));
                }
            }
            (None, Ok(t)) => {
                let close = |k: &str, v: f64| {
                    let w = want[k].as_f64().unwrap_or(f64::NAN);
                    (v - w).abs() <= 1e-12 * w.abs().max(1.0)
                };
                if !(close("energy_j", t.energy_j) && close("user_s", t.user_s) && close("system_s", t.system_s)) {
                    bad.push(format!("{file}: got {t:?}"));
                }
            }
            (Some(_), Ok(t)) => bad.push(format!("{file}: expected a failure, got {t:?}")),
            (None, Err(e)) => bad.push(format!("{file}: unexpected {e}")),
        }
    }
    check(
        bad.is_empty() && expected.len() >= 10,
        if bad.is_empty() {
            format!(
                "{} fixtures match (values to 1e-12 relative, failures by reason and line)",
                expected.len()
            )
        } else {
            bad.join("; ")
        },
    )
}

/// 10 000 random counter pairs, half of them wrapping.
fn counter_wraparound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut wraps = 0;
    let mut bad = 0;
    for i in 0..10_000 {
        let max: u64 = if i % 3 == 0 {
            rng.gen_range(2..1000)
        } else {
            rng.gen_range(1_000_000..(1u64 << 40))
        };
        let before = rng.gen_range(0..max);
        let room = max - 1 - before;
        let elapsed = if i % 2 == 0 && before > 0 {
            rng.gen_range(room + 1..max)
        } else {
            rng.gen_range(0..=room)
        };
        let after = ((u128::from(before) + u128::from(elapsed)) % u128::from(max)) as u64;
        if after < before {
            wraps += 1;
        }
        let snap = |e: u64| CounterSnapshot {
            energy_uj: e,
            max_range_uj: max,
            timestamp_ns: 0,
        };
        let uj = counter_delta_uj(&snap(before), &snap(after));
        let j = counter_delta(&snap(before), &snap(after));
        if uj.as_ref().ok() != Some(&elapsed) || j.ok() != Some(elapsed as f64 * 1e-6) {
            bad += 1;
        }
    }
    check(
        bad == 0 && wraps >= 4000,
        format!("10000 cases ({wraps} wrapped): {bad} wrong deltas"),
    )
}

/// Active 10 W, idle 2 W, no noise: calibrate, subtract, fit → 0.010 J/ms within 1e-9 relative.
fn baseline_pipeline() -> Outcome {
    let spec = ScenarioSpec {
        idle_power_w: 2.0,
        noise_rel: 0.0,
        ..ScenarioSpec::new("synth", vec![("p".into(), 0.010)])
    };
    let manifest = spec.manifest();
    let mut backend = manifest.synthetic_backend(None).map_err(|e| e.to_string())?;
    let idle = measure_idle(&[100.0, 250.0, 500.0, 1000.0, 2000.0], &mut backend).map_err(|e| e.to_string())?;
    let baseline = fit_idle_slope("synth", &idle).map_err(|e| e.to_string())?;
    let run = measure_manifest(&manifest, &manifest.config, &mut backend).map_err(|e| e.to_string())?;
    let raw = analyze_set(&run.sets[0], FitMode::Ols).map_err(|e| e.to_string())?;
    let (adjusted, _) = apply_baselines(&run.sets, std::slice::from_ref(&baseline)).map_err(|e| e.to_string())?;
    let g = analyze_set(&adjusted[0], FitMode::Ols).map_err(|e| e.to_string())?;
    let rel = (g.profile.slope_a / 0.010 - 1.0).abs();
    check(
        rel <= 1e-9 && g.baseline_adjusted,
        format!(
            "idle slope {:.6} J/ms, raw slope {:.6}, adjusted slope {:.12} (relative error {rel:.1e} <= 1e-9)",
            baseline.idle_slope_j_per_ms, raw.profile.slope_a, g.profile.slope_a
        ),
    )
}

/// `measure` with the synthetic backend and a fixed seed writes identical files twice.
fn measure_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = ScenarioSpec::new("synth", uniform_slopes(3, 0.009, 0.0124));
    let manifest = spec.write(dir.path()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_joulemark"))
            .args(["measure", "--seed", "7", "--manifest"])
            .arg(&manifest)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let files: Vec<Vec<u8>> = ["samples.csv", "measurements.json"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        outputs.push(files);
    }
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    check(
        outputs[0] == outputs[1] && bytes > 0,
        format!("samples.csv and measurements.json byte-identical across two runs ({bytes} bytes)"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("OLS recovery", ols_recovery),
        ("normalized-slope arithmetic", normalized_slopes),
        ("sigma_e closed form", sigma_e_closed_form),
        ("outlier tier oracle", outlier_tiers),
        ("trim rule", trim_rule),
        ("Spearman oracle", spearman_oracle),
        ("classification end-to-end", classification),
        ("perf output parser", perf_fixtures),
        ("counter wraparound", counter_wraparound),
        ("baseline pipeline", baseline_pipeline),
        ("measure determinism", measure_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
