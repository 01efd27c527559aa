//! Deterministic power-model backend.
//!
//! Energy is `(active + idle) × wall × (1 + η)` with `η` uniform in
//! `[-noise_rel, +noise_rel]`. The draw is keyed on the seed, the command, the
//! input and the repetition index, so any sample can be reproduced in isolation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendKind};
use crate::model::{ProblemSpec, RunSample, SolutionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub active_power_w: f64,
    pub idle_power_w: f64,
    pub cpu_ms_per_input: BTreeMap<String, f64>,
    pub noise_rel: f64,
    pub seed: u64,
}

impl SyntheticModel {
    pub fn validate(&self) -> Result<(), BackendError> {
        check_power(self.active_power_w, self.idle_power_w, self.noise_rel)?;
        for (input, ms) in &self.cpu_ms_per_input {
            if !(ms.is_finite() && *ms >= 0.0) {
                return Err(BackendError::InvalidModel(format!("cpu time for {input} is {ms}")));
            }
        }
        Ok(())
    }
}

fn check_power(active: f64, idle: f64, noise: f64) -> Result<(), BackendError> {
    if !(active.is_finite() && active > 0.0) {
        return Err(BackendError::InvalidModel(format!(
            "active power must be > 0, got {active}"
        )));
    }
    if !(idle.is_finite() && idle >= 0.0) {
        return Err(BackendError::InvalidModel(format!(
            "idle power must be >= 0, got {idle}"
        )));
    }
    if !(noise.is_finite() && (0.0..1.0).contains(&noise)) {
        return Err(BackendError::InvalidModel(format!(
            "noise_rel must be in [0, 1), got {noise}"
        )));
    }
    Ok(())
}

fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for b in part.iter().chain(&[0xff]) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn relative_noise(noise_rel: f64, seed: u64, parts: &[&[u8]]) -> f64 {
    if noise_rel == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, parts));
    rng.gen_range(-noise_rel..=noise_rel)
}

/// One synthetic run of `cmd` on `input`.
pub fn synthetic_measure(
    model: &SyntheticModel,
    cmd: &SolutionSpec,
    input: &str,
    run_index: u32,
) -> Result<RunSample, BackendError> {
    model.validate()?;
    let cpu_ms = *model
        .cpu_ms_per_input
        .get(input)
        .ok_or_else(|| BackendError::UnknownInput(input.to_string()))?;
    let eta = relative_noise(
        model.noise_rel,
        model.seed,
        &[
            cmd.solution_id.as_bytes(),
            cmd.command_template.as_bytes(),
            input.as_bytes(),
            &run_index.to_le_bytes(),
        ],
    );
    let wall_ms = cpu_ms;
    Ok(RunSample {
        wall_ms,
        cpu_ms,
        energy_j: (model.active_power_w + model.idle_power_w) * wall_ms / 1e3 * (1.0 + eta),
        run_index,
    })
}

/// Machine-level parameters shared by every synthetic workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub active_power_w: f64,
    #[serde(default)]
    pub idle_power_w: f64,
    #[serde(default)]
    pub noise_rel: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Synthetic machine: per-problem active power and per-solution CPU times.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    params: SyntheticParams,
    problem_power_w: BTreeMap<String, f64>,
    workloads: BTreeMap<(String, String), BTreeMap<String, f64>>,
}

impl SyntheticBackend {
    pub fn new(params: SyntheticParams) -> Result<Self, BackendError> {
        check_power(params.active_power_w, params.idle_power_w, params.noise_rel)?;
        Ok(SyntheticBackend {
            params,
            problem_power_w: BTreeMap::new(),
            workloads: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// Overrides the active power for one problem.
    pub fn set_problem_power(&mut self, problem_id: &str, active_power_w: f64) {
        self.problem_power_w.insert(problem_id.to_string(), active_power_w);
    }

    pub fn add_workload(&mut self, problem_id: &str, solution_id: &str, cpu_ms_per_input: BTreeMap<String, f64>) {
        self.workloads
            .insert((problem_id.to_string(), solution_id.to_string()), cpu_ms_per_input);
    }

    /// The per-run model for one (problem, solution) pair.
    pub fn model_for(&self, problem_id: &str, solution_id: &str) -> Result<SyntheticModel, BackendError> {
        let cpu = self
            .workloads
            .get(&(problem_id.to_string(), solution_id.to_string()))
            .ok_or_else(|| BackendError::UnknownInput(format!("no workload for {problem_id}/{solution_id}")))?;
        Ok(SyntheticModel {
            active_power_w: self
                .problem_power_w
                .get(problem_id)
                .copied()
                .unwrap_or(self.params.active_power_w),
            idle_power_w: self.params.idle_power_w,
            cpu_ms_per_input: cpu.clone(),
            noise_rel: self.params.noise_rel,
            seed: self.params.seed,
        })
    }
}

impl Backend for SyntheticBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Synthetic
    }

    fn measure(
        &mut self,
        problem: &ProblemSpec,
        solution: &SolutionSpec,
        run_index: u32,
    ) -> Result<RunSample, BackendError> {
        if problem.input_paths.is_empty() {
            return Err(BackendError::NoInputs);
        }
        let model = self.model_for(&problem.problem_id, &solution.solution_id)?;
        let mut total = RunSample {
            wall_ms: 0.0,
            cpu_ms: 0.0,
            energy_j: 0.0,
            run_index,
        };
        for input in &problem.input_paths {
            let s = synthetic_measure(&model, solution, input, run_index)?;
            total.wall_ms += s.wall_ms;
            total.cpu_ms += s.cpu_ms;
            total.energy_j += s.energy_j;
        }
        Ok(total)
    }

    fn measure_sleep(&mut self, duration_ms: f64, run_index: u32) -> Result<RunSample, BackendError> {
        let eta = relative_noise(
            self.params.noise_rel,
            self.params.seed,
            &[b"sleep", &duration_ms.to_le_bytes(), &run_index.to_le_bytes()],
        );
        Ok(RunSample {
            wall_ms: duration_ms,
            cpu_ms: 0.0,
            energy_j: self.params.idle_power_w * duration_ms / 1e3 * (1.0 + eta),
            run_index,
        })
    }
}
