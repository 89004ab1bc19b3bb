// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Problem files and their translation into solver objects.
//!
//! Physical quantities carry their unit in the key name. Frequencies are
//! converted to rad/ns on the way in: GHz by `2π` and MHz by `2π·10⁻³`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use qoc_core::adjoint::{evaluate, gradient, GradientOptions, TrajectoryMode};
use qoc_core::objective::{default_level_scales, risk_neutral_objective};
use qoc_core::optimizer::OptimizerConfig;
use qoc_core::{
    estimate_steps, CompositeSystem, ControlParameterization, GateProblem, GuardWeights, NoiseModel, ObjectiveReport,
    RateBound, StandardGate, SubsystemSpec, TimeGrid,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn ghz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_to_ghz(w: f64) -> f64 {
    w / (2.0 * PI)
}

pub fn mhz_to_rad(f: f64) -> f64 {
    2.0 * PI * 1e-3 * f
}

pub fn rad_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e-3)
}

/// Boundary splines pinned per carrier block when `pin_boundary` is set.
///
/// Two quadratic splines are nonzero at each end of the horizon.
pub const DEFAULT_PINNED_SPLINES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub levels: Vec<usize>,
    pub essential: Vec<usize>,
    pub freq_ghz: Vec<f64>,
    pub self_kerr_ghz: Vec<f64>,
    /// Defaults to `freq_ghz` (no detuning).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rot_freq_ghz: Option<Vec<f64>>,
    /// Full symmetric table; omitted means uncoupled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_kerr_ghz: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    pub splines_per_carrier: usize,
    /// One row of carrier frequencies per subsystem, equal lengths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carriers_ghz: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub auto_resonant: bool,
    /// Keep at most this many auto-selected carriers, smallest magnitude first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_carriers: Option<usize>,
    pub alpha_max_mhz: f64,
    /// Envelope amplitude bound used for the step estimate.
    /// Defaults to the worst case `√2 N_f α_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_bound_mhz: Option<f64>,
    #[serde(default)]
    pub pin_boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_splines: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    /// `cnot`, `swap` or `identity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Essential column exchanged with column 0 by `swap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_level: Option<usize>,
    /// Zero-based controlling subsystem of `cnot`; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_subsystem: Option<usize>,
    /// JSON gate file, relative to the problem file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<GateMatrix>,
}

/// Row-major complex matrix, entries as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateBoundConfig {
    #[default]
    Spectral,
    Gershgorin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "T_ns")]
    pub horizon_ns: f64,
    /// Samples per period of the fastest rate.
    #[serde(default = "default_cp")]
    pub cp: f64,
    /// Explicit step count; overrides the estimate.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub rate_bound: RateBoundConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_steps: Option<usize>,
    /// Steps between population samples; defaults to `max(1, M/1000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_stride: Option<usize>,
    /// Store the trajectory every this many steps instead of replaying it backward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

fn default_cp() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuardWeightsConfig {
    Uniform(f64),
    PerLevel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    #[serde(default = "default_guard")]
    pub guard_weights: GuardWeightsConfig,
}

fn default_guard() -> GuardWeightsConfig {
    GuardWeightsConfig::Uniform(1.0)
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { guard_weights: default_guard() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Zero disables the infidelity stopping test.
    pub infidelity_target: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { memory: 5, max_iters: 500, grad_tol: 1e-6, infidelity_target: 1e-4, seed: 1, restarts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    #[serde(default)]
    pub enabled: bool,
    pub eps_max_mhz: f64,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    /// One scale per composite level; defaults to `0, …, 0.01, 0.1, 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_scales: Option<Vec<f64>>,
}

fn default_quad_order() -> usize {
    9
}

fn config_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.to_path_buf(), message: message.into() }
}

/// Read a problem file.
///
/// `.json` files are accepted too, either a bare config or a `report.json`
/// carrying one under `config`.
pub fn load(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut config: ProblemConfig = if is_json {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| config_error(path, e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) => c.clone(),
            None => value,
        };
        serde_json::from_value(inner).map_err(|e| config_error(path, e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| config_error(path, e.to_string()))?
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.inline_gate_file(base, path)?;
    Ok(config)
}

pub fn read_gate_matrix(path: &Path) -> Result<GateMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| config_error(path, e.to_string()))
}

impl GateMatrix {
    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Input(format!(
                "gate.matrix: {} entries for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|[re, im]| Complex64::new(*re, *im))))
    }
}

impl ProblemConfig {
    fn inline_gate_file(&mut self, base: &Path, origin: &Path) -> Result<()> {
        let Some(gate) = self.gate.as_mut() else { return Ok(()) };
        if let Some(file) = gate.matrix_file.take() {
            if gate.matrix.is_some() {
                return Err(config_error(origin, "gate: give either `matrix_file` or `matrix`, not both"));
            }
            gate.matrix = Some(read_gate_matrix(&base.join(file))?);
        }
        Ok(())
    }

    pub fn controls(&self) -> Result<&ControlsConfig> {
        self.controls.as_ref().ok_or_else(|| CliError::Input("missing section `controls`".into()))
    }

    pub fn gate(&self) -> Result<&GateConfig> {
        self.gate.as_ref().ok_or_else(|| CliError::Input("missing section `gate`".into()))
    }

    pub fn sim(&self) -> Result<&SimConfig> {
        self.sim.as_ref().ok_or_else(|| CliError::Input("missing section `sim`".into()))
    }

    pub fn risk(&self) -> Result<&RiskConfig> {
        self.risk.as_ref().ok_or_else(|| CliError::Input("missing section `risk`".into()))
    }

    pub fn build_system(&self) -> Result<CompositeSystem> {
        let s = &self.system;
        let q = s.levels.len();
        let lens = [
            ("system.essential", s.essential.len()),
            ("system.freq_ghz", s.freq_ghz.len()),
            ("system.self_kerr_ghz", s.self_kerr_ghz.len()),
            ("system.rot_freq_ghz", s.rot_freq_ghz.as_ref().map_or(q, Vec::len)),
        ];
        if let Some((key, n)) = lens.iter().find(|(_, n)| *n != q) {
            return Err(CliError::Input(format!("{key} has {n} entries, system.levels has {q}")));
        }
        let rot = s.rot_freq_ghz.as_ref().unwrap_or(&s.freq_ghz);
        let specs = (0..q)
            .map(|k| {
                SubsystemSpec::new(
                    s.levels[k],
                    s.essential[k],
                    ghz_to_rad(s.freq_ghz[k]),
                    ghz_to_rad(s.self_kerr_ghz[k]),
                    ghz_to_rad(rot[k]),
                )
            })
            .collect();
        let cross: Vec<Vec<f64>> = s
            .cross_kerr_ghz
            .iter()
            .flatten()
            .map(|row| row.iter().copied().map(ghz_to_rad).collect())
            .collect();
        Ok(CompositeSystem::new(specs, &cross)?)
    }

    /// Essential-level resonances of every subsystem, in GHz.
    pub fn resonances_ghz(&self, essential_only: bool) -> Result<Vec<Vec<f64>>> {
        let system = self.build_system()?;
        Ok((0..system.num_subsystems())
            .map(|k| {
                system
                    .resonance_frequencies(k, essential_only, qoc_core::model::RESONANCE_MERGE_TOL)
                    .into_iter()
                    .map(rad_to_ghz)
                    .collect()
            })
            .collect())
    }

    /// Copy with auto-selected carriers and the step count filled in.
    ///
    /// Everything downstream is built from the resolved copy so that a
    /// re-run from `report.json` sees identical numbers.
    pub fn resolve(&self) -> Result<ProblemConfig> {
        let mut out = self.clone();
        let controls = out.controls.as_mut().ok_or_else(|| CliError::Input("missing section `controls`".into()))?;
        if controls.auto_resonant {
            if controls.carriers_ghz.is_some() {
                return Err(CliError::Input("controls: `carriers_ghz` and `auto_resonant` are exclusive".into()));
            }
            let mut lists = self.resonances_ghz(true)?;
            for list in &mut lists {
                list.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            }
            let keep = lists
                .iter()
                .map(Vec::len)
                .min()
                .unwrap_or(0)
                .min(controls.max_carriers.unwrap_or(usize::MAX));
            for list in &mut lists {
                list.truncate(keep);
            }
            controls.carriers_ghz = Some(lists);
            controls.auto_resonant = false;
        }
        if controls.carriers_ghz.is_none() {
            return Err(CliError::Input("controls: give `carriers_ghz` or set `auto_resonant`".into()));
        }
        if out.sim.as_ref().is_some_and(|s| s.steps.is_none()) {
            let steps = {
                let system = out.build_system()?;
                let param = out.build_parameterization()?;
                let sim = out.sim()?;
                let controls = out.controls()?;
                let alpha_max = mhz_to_rad(controls.alpha_max_mhz);
                let d_inf = match controls.amplitude_bound_mhz {
                    Some(b) => vec![mhz_to_rad(b); system.num_subsystems()],
                    None => param.max_envelope_bound(alpha_max),
                };
                let carriers: Vec<f64> = (0..param.num_subsystems()).flat_map(|k| param.carriers(k).to_vec()).collect();
                let bound = match sim.rate_bound {
                    RateBoundConfig::Spectral => RateBound::Spectral,
                    RateBoundConfig::Gershgorin => RateBound::Gershgorin,
                };
                estimate_steps(&system, &d_inf, &carriers, sim.horizon_ns, sim.cp, sim.min_steps.unwrap_or(1), bound)?
            };
            out.sim.as_mut().expect("checked above").steps = Some(steps);
        }
        Ok(out)
    }

    pub fn build_parameterization(&self) -> Result<ControlParameterization> {
        let controls = self.controls()?;
        let carriers = controls
            .carriers_ghz
            .as_ref()
            .ok_or_else(|| CliError::Input("controls: carriers are not resolved".into()))?;
        if carriers.len() != self.system.levels.len() {
            return Err(CliError::Input(format!(
                "controls.carriers_ghz has {} rows for {} subsystems",
                carriers.len(),
                self.system.levels.len()
            )));
        }
        let carriers = carriers.iter().map(|row| row.iter().copied().map(ghz_to_rad).collect()).collect();
        let param = ControlParameterization::new(self.sim()?.horizon_ns, controls.splines_per_carrier, carriers)?;
        Ok(if controls.pin_boundary {
            param.with_pinned_boundary(controls.pinned_splines.unwrap_or(DEFAULT_PINNED_SPLINES))?
        } else {
            param
        })
    }

    pub fn build_gate(&self, essential: &[usize]) -> Result<DMatrix<Complex64>> {
        let gate = self.gate()?;
        match (&gate.name, &gate.matrix) {
            (Some(_), Some(_)) => Err(CliError::Input("gate: give either `name` or a matrix, not both".into())),
            (None, Some(m)) => m.to_matrix(),
            (None, None) => Err(CliError::Input("gate: missing `name` or `matrix_file`".into())),
            (Some(name), None) => {
                let standard = match name.to_ascii_lowercase().as_str() {
                    "cnot" => StandardGate::Cnot { control: gate.control_subsystem.unwrap_or(1) },
                    "swap" => StandardGate::Swap0d(
                        gate.swap_level.ok_or_else(|| CliError::Input("gate: `swap` needs `swap_level`".into()))?,
                    ),
                    "identity" => StandardGate::Identity,
                    other => return Err(CliError::Input(format!("gate.name: unknown gate `{other}`"))),
                };
                Ok(standard.matrix(essential)?)
            }
        }
    }

    pub fn guard_weights(&self) -> GuardWeights {
        match &self.objective.guard_weights {
            GuardWeightsConfig::Uniform(w) => GuardWeights::Uniform(*w),
            GuardWeightsConfig::PerLevel(w) => GuardWeights::PerLevel(w.clone()),
        }
    }

    pub fn build_noise(&self, total_dim: usize) -> Result<NoiseModel> {
        let risk = self.risk()?;
        let scales = risk.level_scales.clone().unwrap_or_else(|| default_level_scales(total_dim));
        if scales.len() != total_dim {
            return Err(CliError::Input(format!(
                "risk.level_scales has {} entries for {total_dim} levels",
                scales.len()
            )));
        }
        Ok(NoiseModel::new(mhz_to_rad(risk.eps_max_mhz), risk.quad_order, scales)?)
    }
}

/// A resolved problem ready to evaluate.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ProblemConfig,
    pub system: CompositeSystem,
    pub param: ControlParameterization,
    pub problem: GateProblem,
    pub grid: TimeGrid,
    /// Coefficient bound in rad/ns.
    pub alpha_max: f64,
    /// Present when the risk-neutral objective is enabled.
    pub noise: Option<NoiseModel>,
    pub mode: TrajectoryMode,
}

impl Setup {
    pub fn new(config: &ProblemConfig) -> Result<Self> {
        Self::with_steps(config, None)
    }

    /// `steps` replaces the configured step count.
    pub fn with_steps(config: &ProblemConfig, steps: Option<usize>) -> Result<Self> {
        let mut config = config.clone();
        if let Some(m) = steps {
            config
                .sim
                .as_mut()
                .ok_or_else(|| CliError::Input("missing section `sim`".into()))?
                .steps = Some(m);
        }
        let config = config.resolve()?;
        let system = config.build_system()?;
        let param = config.build_parameterization()?;
        let sim = config.sim()?;
        let essential: Vec<usize> = system.subsystems().iter().map(|s| s.essential).collect();
        let gate = config.build_gate(&essential)?;
        let problem = GateProblem::new(system.clone(), gate, sim.horizon_ns, config.guard_weights())?;
        let grid = TimeGrid::new(sim.horizon_ns, sim.steps.expect("resolved"))?;
        let alpha_max = mhz_to_rad(config.controls()?.alpha_max_mhz);
        if !(alpha_max.is_finite() && alpha_max >= 0.0) {
            return Err(CliError::Input(format!("controls.alpha_max_mhz must be >= 0, got {}", config.controls()?.alpha_max_mhz)));
        }
        let noise = match &config.risk {
            Some(r) if r.enabled => Some(config.build_noise(system.total_dim())?),
            _ => None,
        };
        let mode = match sim.checkpoint_every {
            Some(every) => TrajectoryMode::Checkpoint { every },
            None => TrajectoryMode::Replay,
        };
        Ok(Self { config, system, param, problem, grid, alpha_max, noise, mode })
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.config.optimizer;
        OptimizerConfig {
            memory: o.memory,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            infidelity_target: (o.infidelity_target > 0.0).then_some(o.infidelity_target),
            lower: -self.alpha_max,
            upper: self.alpha_max,
            ..OptimizerConfig::default()
        }
    }

    /// Objective and gradient; the noise expectation when risk is enabled.
    pub fn objective_gradient(&self, alpha: &[f64], threads: usize) -> qoc_core::Result<(ObjectiveReport, Vec<f64>)> {
        let opts = GradientOptions { mode: self.mode, threads };
        match &self.noise {
            None => gradient(&self.problem, &self.param, alpha, &self.grid, opts),
            Some(noise) => risk_neutral_objective(noise, threads, |eps| {
                let perturbed = self.problem.with_system(noise.perturb(&self.system, eps)?)?;
                gradient(&perturbed, &self.param, alpha, &self.grid, GradientOptions { threads: 1, ..opts })
            }),
        }
    }

    /// Objective value only, same expectation rule as [`Self::objective_gradient`].
    pub fn objective(&self, alpha: &[f64], threads: usize) -> Result<ObjectiveReport> {
        match &self.noise {
            None => Ok(evaluate(&self.problem, &self.param, alpha, &self.grid, threads)?),
            Some(noise) => {
                let (report, _) = risk_neutral_objective(noise, threads, |eps| {
                    let perturbed = self.problem.with_system(noise.perturb(&self.system, eps)?)?;
                    Ok((evaluate(&perturbed, &self.param, alpha, &self.grid, 1)?, Vec::new()))
                })?;
                Ok(report)
            }
        }
    }

    /// Noise-free objective.
    pub fn nominal(&self, alpha: &[f64], threads: usize) -> Result<ObjectiveReport> {
        Ok(evaluate(&self.problem, &self.param, alpha, &self.grid, threads)?)
    }

    /// Objective on the Hamiltonian shifted by `eps` (rad/ns) along the risk scales.
    pub fn perturbed(&self, alpha: &[f64], eps: f64, threads: usize) -> Result<ObjectiveReport> {
        let noise = self.config.build_noise(self.system.total_dim())?;
        let perturbed = self.problem.with_system(noise.perturb(&self.system, eps)?)?;
        Ok(evaluate(&perturbed, &self.param, alpha, &self.grid, threads)?)
    }

    pub fn population_stride(&self) -> usize {
        self.config
            .sim
            .as_ref()
            .and_then(|s| s.population_stride)
            .unwrap_or_else(|| (self.grid.steps() / 1000).max(1))
            .max(1)
    }
}
