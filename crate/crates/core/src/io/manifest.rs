//! Suite manifests (JSON).
//!
//! ```json
//! {
//!   "machine": { "id": "hpelite", "cpu_label": "i7-8700", "core_count": 6 },
//!   "config": { "backend": "powercap-systime", "repetitions": 10, "flag_tag": "-O2" },
//!   "problems": [
//!     { "problem_id": "1068", "input_paths": ["inputs/1068/01.in"],
//!       "solutions": [ { "solution_id": "a", "command_template": "./bin/a" } ] }
//!   ]
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory, and commands
//! run from there. For the synthetic backend, a `synthetic` block gives the
//! machine's power model, each problem may set `synthetic_power_w` and each
//! solution carries `synthetic_cpu_ms` keyed by input path.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, IoError};
use crate::backend::synthetic::SyntheticParams;
use crate::backend::SyntheticBackend;
use crate::model::{MachineDescriptor, ProblemSpec, SolutionSpec};
use crate::orchestrator::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSolution {
    #[serde(flatten)]
    pub spec: SolutionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_cpu_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestProblem {
    #[serde(flatten)]
    pub spec: ProblemSpec,
    pub solutions: Vec<ManifestSolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_power_w: Option<f64>,
}

impl ManifestProblem {
    pub fn solution_specs(&self) -> Vec<SolutionSpec> {
        self.solutions.iter().map(|s| s.spec.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub machine: MachineDescriptor,
    pub config: RunConfig,
    pub problems: Vec<ManifestProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticParams>,
}

impl SuiteManifest {
    /// Every structural problem with the manifest, without touching the disk.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.machine.id.trim().is_empty() {
            out.push("machine id is empty".to_string());
        }
        if self.machine.core_count == 0 {
            out.push("machine core_count must be positive".to_string());
        }
        let mut problem_ids = BTreeSet::new();
        for p in &self.problems {
            if !problem_ids.insert(&p.spec.problem_id) {
                out.push(format!("duplicate problem_id: {}", p.spec.problem_id));
            }
            out.extend(p.spec.violations());
            let mut ids = BTreeSet::new();
            for s in &p.solutions {
                if !ids.insert(&s.spec.solution_id) {
                    out.push(format!(
                        "duplicate solution_id: {}/{}",
                        p.spec.problem_id, s.spec.solution_id
                    ));
                }
                if s.spec.command_template.trim().is_empty() {
                    out.push(format!(
                        "empty command_template: {}/{}",
                        p.spec.problem_id, s.spec.solution_id
                    ));
                }
            }
        }
        out
    }

    /// Builds the synthetic machine described by the manifest.
    pub fn synthetic_backend(&self, seed: Option<u64>) -> Result<SyntheticBackend, IoError> {
        let mut params = self
            .synthetic
            .ok_or_else(|| IoError::Invalid("manifest has no synthetic block".into()))?;
        if let Some(seed) = seed {
            params.seed = seed;
        }
        let mut b = SyntheticBackend::new(params).map_err(|e| IoError::Invalid(e.to_string()))?;
        for p in &self.problems {
            if let Some(w) = p.synthetic_power_w {
                b.set_problem_power(&p.spec.problem_id, w);
            }
            for s in &p.solutions {
                let cpu = s.synthetic_cpu_ms.clone().ok_or_else(|| {
                    IoError::Invalid(format!(
                        "solution {}/{} has no synthetic_cpu_ms",
                        p.spec.problem_id, s.spec.solution_id
                    ))
                })?;
                if let Some(missing) = p.spec.input_paths.iter().find(|i| !cpu.contains_key(*i)) {
                    return Err(IoError::Invalid(format!(
                        "solution {}/{} has no synthetic time for input {missing}",
                        p.spec.problem_id, s.spec.solution_id
                    )));
                }
                b.add_workload(&p.spec.problem_id, &s.spec.solution_id, cpu);
            }
        }
        Ok(b)
    }
}

/// Reads and checks a manifest. Returns it with the directory it lives in.
pub fn load_manifest(path: &Path) -> Result<(SuiteManifest, PathBuf), IoError> {
    let manifest: SuiteManifest = read_json(path)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let violations = manifest.violations();
    if !violations.is_empty() {
        return Err(IoError::Invalid(violations.join("; ")));
    }
    for p in &manifest.problems {
        for input in &p.spec.input_paths {
            let full = base.join(input);
            if !full.is_file() {
                return Err(IoError::Invalid(format!("input file not found: {}", full.display())));
            }
        }
    }
    Ok((manifest, base))
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    const MANIFEST: &str = r#"{
      "machine": { "id": "synth", "core_count": 4 },
      "config": { "backend": "synthetic", "flag_tag": "-O2" },
      "synthetic": { "active_power_w": 10.0, "idle_power_w": 2.0, "noise_rel": 0.0, "seed": 7 },
      "problems": [
        { "problem_id": "1068", "input_paths": ["in/01.txt"], "synthetic_power_w": 12.0,
          "solutions": [
            { "solution_id": "a", "command_template": "./a", "synthetic_cpu_ms": { "in/01.txt": 100.0 } },
            { "solution_id": "b", "command_template": "./b", "synthetic_cpu_ms": { "in/01.txt": 250.0 } }
          ] }
      ]
    }"#;

    fn setup(with_input: bool) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("suite.json");
        fs::write(&m, MANIFEST).unwrap();
        if with_input {
            fs::create_dir_all(dir.path().join("in")).unwrap();
            fs::write(dir.path().join("in/01.txt"), "5\n").unwrap();
        }
        (dir, m)
    }

    #[test]
    fn loads_and_builds_synthetic_machine() {
        let (_d, m) = setup(true);
        let (manifest, _) = load_manifest(&m).unwrap();
        assert_eq!(manifest.config.repetitions, 10);
        assert_eq!(manifest.problems[0].solutions.len(), 2);
        let b = manifest.synthetic_backend(Some(9)).unwrap();
        assert_eq!(b.params().seed, 9);
        let model = b.model_for("1068", "b").unwrap();
        assert_eq!(model.active_power_w, 12.0);
    }

    #[test]
    fn missing_input_named() {
        let (_d, m) = setup(false);
        let e = load_manifest(&m).unwrap_err().to_string();
        assert!(e.contains("in/01.txt"), "{e}");
    }

    #[test]
    fn duplicate_solution_rejected() {
        let mut manifest: SuiteManifest = serde_json::from_str(MANIFEST).unwrap();
        let dup = manifest.problems[0].solutions[0].clone();
        manifest.problems[0].solutions.push(dup);
        assert_eq!(manifest.violations(), vec!["duplicate solution_id: 1068/a"]);
    }
}
