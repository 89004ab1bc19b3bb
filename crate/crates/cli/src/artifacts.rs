// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Files written by the commands.
//!
//! Every CSV starts with a header row. `FORMAT_VERSION` in `report.json` and
//! `params.json` changes whenever a header or field layout changes.

use std::path::{Path, PathBuf};

use qoc_core::optimizer::IterationRecord;
use qoc_core::propagator::{propagate, RealState, SplineControls, StageSink, Stages};
use serde::{Deserialize, Serialize};

use crate::config::{mhz_to_rad, rad_to_ghz, rad_to_mhz, ProblemConfig, Setup};
use crate::error::{CliError, Result};
use crate::spectrum::one_sided_spectrum;

pub const FORMAT_VERSION: u32 = 1;

/// Layout of a parameter vector; must match the problem it is loaded into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsHeader {
    pub format_version: u32,
    pub num_subsystems: usize,
    pub splines_per_carrier: usize,
    pub carriers_per_subsystem: usize,
    pub carriers_ghz: Vec<Vec<f64>>,
    #[serde(rename = "T_ns")]
    pub horizon_ns: f64,
    /// Index of `α_{k,n,b}` (real part) is `((k N_f + n) 2 + 0) N_b + b`; imaginary uses `+ 1`.
    pub layout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub header: ParamsHeader,
    pub alpha_mhz: Vec<f64>,
}

const LAYOUT: &str = "subsystem-major, carrier, re/im, spline";

impl ParamsFile {
    pub fn from_alpha(setup: &Setup, alpha: &[f64]) -> Self {
        let p = &setup.param;
        Self {
            header: ParamsHeader {
                format_version: FORMAT_VERSION,
                num_subsystems: p.num_subsystems(),
                splines_per_carrier: p.splines_per_carrier(),
                carriers_per_subsystem: p.num_carriers(),
                carriers_ghz: (0..p.num_subsystems())
                    .map(|k| p.carriers(k).iter().copied().map(rad_to_ghz).collect())
                    .collect(),
                horizon_ns: p.horizon(),
                layout: LAYOUT.into(),
            },
            alpha_mhz: alpha.iter().copied().map(rad_to_mhz).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.into(), message: e.to_string() })
    }

    /// Coefficients in rad/ns after checking the header against `setup`.
    pub fn alpha_for(&self, setup: &Setup) -> Result<Vec<f64>> {
        let expected = Self::from_alpha(setup, &[]).header;
        let h = &self.header;
        let carriers_match = h.carriers_ghz.len() == expected.carriers_ghz.len()
            && h.carriers_ghz.iter().zip(&expected.carriers_ghz).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
            });
        if h.format_version != FORMAT_VERSION
            || h.num_subsystems != expected.num_subsystems
            || h.splines_per_carrier != expected.splines_per_carrier
            || h.carriers_per_subsystem != expected.carriers_per_subsystem
            || !carriers_match
            || (h.horizon_ns - expected.horizon_ns).abs() > 1e-12 * expected.horizon_ns
        {
            return Err(CliError::Input(format!(
                "parameter header {h:?} does not match the problem layout {expected:?}"
            )));
        }
        if self.alpha_mhz.len() != setup.param.num_params() {
            return Err(CliError::Input(format!(
                "parameter file has {} coefficients, problem has D = {}",
                self.alpha_mhz.len(),
                setup.param.num_params()
            )));
        }
        Ok(self.alpha_mhz.iter().copied().map(mhz_to_rad).collect())
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub command: &'static str,
    pub status: String,
    pub j1: f64,
    pub j2: f64,
    pub total: f64,
    pub max_guard_population: f64,
    /// Noise-free values; equal to the above unless risk is enabled.
    pub nominal_j1: f64,
    pub nominal_j2: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    pub h_ns: f64,
    #[serde(rename = "D")]
    pub num_params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_restart: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `null` when timing is suppressed for reproducible output.
    pub wall_time_s: Option<f64>,
    pub config: ProblemConfig,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Header plus numeric rows.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let wrap = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn num(x: f64) -> String {
    // Shortest round-trip representation.
    format!("{x:?}")
}

fn head(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_convergence(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let header = head(&["iter", "j1", "j2", "total", "pg_norm", "step", "evaluations"]);
    write_csv(
        path,
        &header,
        history.iter().map(|r| {
            vec![
                r.iter.to_string(),
                num(r.j1),
                num(r.j2),
                num(r.total),
                num(r.pg_norm),
                num(r.step),
                r.evaluations.to_string(),
            ]
        }),
    )
}

/// Sample times `t_n` for `n = 0, s, 2s, …` plus the final step.
fn sample_steps(steps: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(stride).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Envelopes, carrier sums and lab-frame drive in MHz.
pub fn write_controls(path: &Path, setup: &Setup, alpha: &[f64]) -> Result<()> {
    let p = &setup.param;
    let (nq, nf) = (p.num_subsystems(), p.num_carriers());
    let mut header = vec!["t_ns".to_string()];
    for k in 0..nq {
        for n in 0..nf {
            header.push(format!("p_s{k}_c{n}_mhz"));
            header.push(format!("q_s{k}_c{n}_mhz"));
        }
    }
    for k in 0..nq {
        header.extend([format!("re_d_s{k}_mhz"), format!("im_d_s{k}_mhz"), format!("lab_f_s{k}_mhz")]);
    }
    let rows = sample_steps(setup.grid.steps(), setup.population_stride()).into_iter().map(|n| {
        let t = setup.grid.time(n);
        let s = p.sample_envelopes(alpha, t);
        let mut row = vec![num(t)];
        for k in 0..nq {
            for n in 0..nf {
                row.push(num(rad_to_mhz(s.p[k][n])));
                row.push(num(rad_to_mhz(s.q[k][n])));
            }
        }
        for (k, spec) in setup.system.subsystems().iter().enumerate() {
            let (sn, cs) = (spec.rot_freq * t).sin_cos();
            let lab = 2.0 * (s.re[k] * cs - s.im[k] * sn);
            row.extend([num(rad_to_mhz(s.re[k])), num(rad_to_mhz(s.im[k])), num(rad_to_mhz(lab))]);
        }
        row
    });
    write_csv(path, &header, rows)
}

/// Level populations of every evolved column at sampled steps.
#[derive(Debug, Clone)]
pub struct PopulationSampler {
    stride: usize,
    dim: usize,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl PopulationSampler {
    pub fn new(stride: usize, dim: usize) -> Self {
        Self { stride, dim, rows: Vec::new() }
    }

    fn push_column(&mut self, step: usize, column: usize, u: &[f64], v: &[f64]) {
        if column == 0 {
            self.rows.push((step, Vec::new()));
        }
        let row = &mut self.rows.last_mut().expect("column 0 opens the row").1;
        debug_assert_eq!(row.len(), column * self.dim);
        row.extend(u.iter().zip(v).map(|(a, b)| a * a + b * b));
    }

    /// Record the state at the final time.
    pub fn finish(&mut self, steps: usize, state: &RealState) {
        if self.rows.last().is_some_and(|(n, _)| *n == steps) {
            return;
        }
        for (j, (u, v)) in state.u.iter().zip(&state.v).enumerate() {
            self.push_column(steps, j, u, v);
        }
    }
}

impl StageSink for PopulationSampler {
    fn accept(&mut self, step: usize, column: usize, st: &Stages) {
        if step.is_multiple_of(self.stride) {
            self.push_column(step, column, &st.u1, &st.v0);
        }
    }
}

/// Propagate with `alpha` and sample populations; returns the sampler.
pub fn sample_populations(setup: &Setup, alpha: &[f64]) -> Result<PopulationSampler> {
    let controls = SplineControls { param: &setup.param, alpha };
    let mut state = RealState::initial(setup.problem.essential_map(), setup.system.total_dim());
    let mut sampler = PopulationSampler::new(setup.population_stride(), setup.system.total_dim());
    propagate(&setup.system, &controls, &setup.grid, &mut state, &mut sampler)?;
    sampler.finish(setup.grid.steps(), &state);
    Ok(sampler)
}

pub fn write_populations(path: &Path, setup: &Setup, sampler: &PopulationSampler) -> Result<()> {
    let dim = setup.system.total_dim();
    let mut header = vec!["t_ns".to_string()];
    for j in 0..setup.problem.num_columns() {
        header.extend((0..dim).map(|k| format!("col{j}_lvl{k}")));
    }
    let rows = sampler.rows.iter().map(|(n, pops)| {
        std::iter::once(num(setup.grid.time(*n))).chain(pops.iter().map(|&x| num(x))).collect()
    });
    write_csv(path, &header, rows)
}

/// One-sided spectrum of the lab-frame drive of every subsystem.
pub fn write_spectrum(path: &Path, setup: &Setup, alpha: &[f64]) -> Result<()> {
    let m = setup.grid.steps();
    let h = setup.grid.step();
    let spectra: Vec<(Vec<f64>, Vec<f64>)> = setup
        .system
        .subsystems()
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let samples: Vec<f64> = (0..m)
                .map(|n| setup.param.lab_frame_control(alpha, k, setup.grid.time(n), spec.rot_freq))
                .collect();
            one_sided_spectrum(&samples, h)
        })
        .collect();
    let mut header = vec!["freq_ghz".to_string()];
    header.extend((0..spectra.len()).map(|k| format!("magnitude_s{k}")));
    let bins = spectra.first().map_or(0, |s| s.0.len());
    let rows = (0..bins).map(|b| {
        std::iter::once(num(spectra[0].0[b])).chain(spectra.iter().map(|s| num(s.1[b]))).collect()
    });
    write_csv(path, &header, rows)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
