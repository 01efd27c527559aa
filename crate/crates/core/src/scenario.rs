//! Synthetic suites for demos, tests and dry runs without energy counters.
//!
//! Each problem gets its own profile slope. Its solutions get CPU times drawn
//! log-uniformly from `cpu_ms_range`, so fast and slow solutions are mixed the
//! way real submissions are.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{BackendKind, SyntheticParams};
use crate::io::{write_json, write_text, IoError, ManifestProblem, ManifestSolution, SuiteManifest};
use crate::model::{MachineDescriptor, ProblemSpec, SolutionSpec};
use crate::orchestrator::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub machine_id: String,
    /// `(problem_id, slope)`: energy above idle per CPU millisecond, J/ms.
    pub problems: Vec<(String, f64)>,
    pub solutions_per_problem: usize,
    pub inputs_per_problem: usize,
    /// Total CPU time of a solution over all inputs, ms.
    pub cpu_ms_range: (f64, f64),
    pub idle_power_w: f64,
    pub noise_rel: f64,
    pub seed: u64,
    pub repetitions: u32,
}

impl ScenarioSpec {
    pub fn new(machine_id: &str, problems: Vec<(String, f64)>) -> Self {
        ScenarioSpec {
            machine_id: machine_id.to_string(),
            problems,
            solutions_per_problem: 30,
            inputs_per_problem: 3,
            cpu_ms_range: (20.0, 2000.0),
            idle_power_w: 0.0,
            noise_rel: 0.02,
            seed: 7,
            repetitions: 10,
        }
    }

    fn input_path(problem: &str, k: usize) -> String {
        format!("inputs/{problem}/{:02}.in", k + 1)
    }

    /// The suite as a manifest for the synthetic backend.
    pub fn manifest(&self) -> SuiteManifest {
        let (lo, hi) = self.cpu_ms_range;
        let (llo, lhi) = (lo.ln(), hi.max(lo).ln());
        let inputs = self.inputs_per_problem.max(1);
        let problems = self
            .problems
            .iter()
            .enumerate()
            .map(|(pi, (pid, slope))| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(1_000_003).wrapping_add(pi as u64));
                let input_paths: Vec<String> = (0..inputs).map(|k| Self::input_path(pid, k)).collect();
                let solutions = (0..self.solutions_per_problem)
                    .map(|si| {
                        let total = if lhi > llo { rng.gen_range(llo..lhi).exp() } else { lo };
                        let weights: Vec<f64> = (0..inputs).map(|_| rng.gen_range(0.5..1.5)).collect();
                        let wsum: f64 = weights.iter().sum();
                        let cpu: BTreeMap<String, f64> = input_paths
                            .iter()
                            .zip(&weights)
                            .map(|(p, w)| (p.clone(), total * w / wsum))
                            .collect();
                        let sid = format!("s{:02}", si + 1);
                        ManifestSolution {
                            spec: SolutionSpec {
                                command_template: format!("./solutions/{pid}/{sid}"),
                                solution_id: sid,
                                language_tag: "c++".into(),
                                flag_tag: "-O2".into(),
                                judge_time_ms: None,
                            },
                            synthetic_cpu_ms: Some(cpu),
                        }
                    })
                    .collect();
                ManifestProblem {
                    spec: ProblemSpec {
                        problem_id: pid.clone(),
                        input_paths,
                        category: "synthetic".into(),
                    },
                    solutions,
                    synthetic_power_w: Some(slope * 1e3),
                }
            })
            .collect();
        let mut config = RunConfig::new(BackendKind::Synthetic);
        config.repetitions = self.repetitions;
        config.flag_tag = "-O2".into();
        SuiteManifest {
            machine: MachineDescriptor {
                id: self.machine_id.clone(),
                cpu_label: "synthetic".into(),
                core_count: 4,
                notes: String::new(),
            },
            config,
            problems,
            synthetic: Some(SyntheticParams {
                active_power_w: self.problems.first().map_or(10.0, |p| p.1 * 1e3),
                idle_power_w: self.idle_power_w,
                noise_rel: self.noise_rel,
                seed: self.seed,
            }),
        }
    }

    /// Writes `suite.json` and placeholder input files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, IoError> {
        let manifest = self.manifest();
        for p in &manifest.problems {
            for (k, input) in p.spec.input_paths.iter().enumerate() {
                write_text(&dir.join(input), &format!("{}\n", k + 1))?;
            }
        }
        let path = dir.join("suite.json");
        write_json(&manifest, &path)?;
        Ok(path)
    }
}

/// `n` problems `p01..` with slopes evenly spaced over `[lo, hi]`.
pub fn uniform_slopes(n: usize, lo: f64, hi: f64) -> Vec<(String, f64)> {
    (0..n)
        .map(|i| {
            let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            (format!("p{:02}", i + 1), lo + (hi - lo) * f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::load_manifest;

    #[test]
    fn manifest_is_valid_and_seeded() {
        let spec = ScenarioSpec::new("synth", uniform_slopes(4, 0.009, 0.0125));
        let m = spec.manifest();
        assert!(m.violations().is_empty());
        assert_eq!(m, spec.manifest());
        let other = ScenarioSpec {
            seed: 8,
            ..spec.clone()
        }
        .manifest();
        assert_ne!(m.problems[0].solutions, other.problems[0].solutions);
        for p in &m.problems {
            for s in &p.solutions {
                let total: f64 = s.synthetic_cpu_ms.as_ref().unwrap().values().sum();
                assert!((20.0 - 1e-9..=2000.0 + 1e-9).contains(&total));
            }
        }
        assert_eq!(m.problems[3].synthetic_power_w, Some(12.5));
    }

    #[test]
    fn written_suite_loads() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ScenarioSpec::new("synth", uniform_slopes(2, 0.01, 0.02));
        let path = spec.write(dir.path()).unwrap();
        let (m, _) = load_manifest(&path).unwrap();
        assert_eq!(m, spec.manifest());
    }

    #[test]
    fn slopes_spacing() {
        let s = uniform_slopes(15, 1.0, 1.379);
        assert_eq!(s[0].1, 1.0);
        assert!((s[14].1 - 1.379).abs() < 1e-12);
        assert_eq!(s[14].0, "p15");
    }
}
