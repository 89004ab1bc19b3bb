// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::time::Instant;

use qoc_core::optimizer::{initialize, minimize, Evaluation, Minimum};
use qoc_core::Status;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::artifacts::{
    ensure_dir, out_path, sample_populations, write_controls, write_convergence, write_csv, write_json,
    write_populations, write_spectrum, ParamsFile, Report, FORMAT_VERSION,
};
use crate::config::{mhz_to_rad, ProblemConfig, Setup};
use crate::error::{exit, CliError, Result};

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub threads: usize,
    /// Omit wall time so repeated runs give identical reports.
    pub reproducible: bool,
}

impl RunOptions {
    fn wall_time(&self, start: Instant) -> Option<f64> {
        (!self.reproducible).then(|| start.elapsed().as_secs_f64())
    }
}

#[derive(Serialize)]
struct Resonances {
    essential_only: bool,
    resonances_ghz: Vec<Vec<f64>>,
}

pub fn resonances(config: &ProblemConfig, all_levels: bool, out: Option<&Path>) -> Result<i32> {
    let lists = config.resonances_ghz(!all_levels)?;
    for (k, list) in lists.iter().enumerate() {
        let shown: Vec<String> = list.iter().map(|f| format!("{f:.6}")).collect();
        eprintln!("subsystem {k}: {} GHz", shown.join(", "));
    }
    let doc = Resonances { essential_only: !all_levels, resonances_ghz: lists };
    println!("{}", serde_json::to_string(&doc).expect("serializable"));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&out_path(dir, "resonances.json"), &doc)?;
    }
    Ok(exit::SUCCESS)
}

fn write_run_artifacts(dir: &Path, setup: &Setup, alpha: &[f64]) -> Result<()> {
    write_json(&out_path(dir, "params.json"), &ParamsFile::from_alpha(setup, alpha))?;
    write_controls(&out_path(dir, "controls.csv"), setup, alpha)?;
    let sampler = sample_populations(setup, alpha)?;
    write_populations(&out_path(dir, "populations.csv"), setup, &sampler)?;
    write_spectrum(&out_path(dir, "spectrum.csv"), setup, alpha)
}

fn base_report(setup: &Setup, command: &'static str, status: String, alpha: &[f64], opts: &RunOptions) -> Result<Report> {
    let value = setup.objective(alpha, opts.threads)?;
    let nominal = setup.nominal(alpha, opts.threads)?;
    Ok(Report {
        format_version: FORMAT_VERSION,
        command,
        status,
        j1: value.j1,
        j2: value.j2,
        total: value.total,
        max_guard_population: nominal.max_guard_pop,
        nominal_j1: nominal.j1,
        nominal_j2: nominal.j2,
        steps: setup.grid.steps(),
        h_ns: setup.grid.step(),
        num_params: setup.param.num_params(),
        iterations: None,
        best_restart: None,
        seed: None,
        wall_time_s: None,
        config: setup.config.clone(),
    })
}

pub fn simulate(config: &ProblemConfig, params: &Path, out: &Path, opts: &RunOptions) -> Result<i32> {
    let start = Instant::now();
    let setup = Setup::new(config)?;
    let alpha = ParamsFile::read(params)?.alpha_for(&setup)?;
    ensure_dir(out)?;
    write_run_artifacts(out, &setup, &alpha)?;
    let mut report = base_report(&setup, "simulate", "ok".into(), &alpha, opts)?;
    report.wall_time_s = opts.wall_time(start);
    write_json(&out_path(out, "report.json"), &report)?;
    eprintln!("J1 = {:.6e}  J2 = {:.6e}  M = {}", report.j1, report.j2, report.steps);
    Ok(exit::SUCCESS)
}

fn status_code(status: Status) -> i32 {
    match status {
        Status::Stalled => exit::STALLED,
        Status::NonFinite => exit::NON_FINITE,
        Status::GradTol | Status::InfidelityTarget | Status::MaxIters => exit::SUCCESS,
    }
}

fn run_restart(setup: &Setup, seed: u64, opts: &RunOptions) -> Result<Minimum> {
    let x0 = initialize(setup.alpha_max, seed, setup.param.pinned());
    Ok(minimize(&setup.optimizer_config(), &x0, setup.param.pinned(), |alpha| {
        let (report, grad) = setup.objective_gradient(alpha, opts.threads)?;
        Ok(Evaluation { value: report.total, j1: report.j1, j2: report.j2, grad })
    })?)
}

pub fn optimize(config: &ProblemConfig, restarts: Option<usize>, out: &Path, opts: &RunOptions) -> Result<i32> {
    let start = Instant::now();
    let setup = Setup::new(config)?;
    let restarts = restarts.unwrap_or(setup.config.optimizer.restarts).max(1);
    let seed0 = setup.config.optimizer.seed;
    ensure_dir(out)?;
    eprintln!(
        "M = {}  h = {:.6} ns  D = {}  restarts = {restarts}",
        setup.grid.steps(),
        setup.grid.step(),
        setup.param.num_params()
    );
    let mut best: Option<(usize, Minimum)> = None;
    for r in 0..restarts {
        let seed = seed0.wrapping_add(r as u64);
        let result = run_restart(&setup, seed, opts)?;
        eprintln!(
            "restart {r} (seed {seed}): {} after {} iterations, J1 = {:.4e}, J2 = {:.4e}",
            result.status.as_str(),
            result.history.len().saturating_sub(1),
            result.eval.j1,
            result.eval.j2
        );
        if restarts > 1 {
            write_convergence(&out_path(out, &format!("convergence_r{r}.csv")), &result.history)?;
        }
        if best.as_ref().is_none_or(|(_, b)| result.eval.value < b.eval.value) {
            best = Some((r, result));
        }
    }
    let (best_r, best) = best.expect("at least one restart");
    write_convergence(&out_path(out, "convergence.csv"), &best.history)?;
    write_run_artifacts(out, &setup, &best.x)?;
    let mut report = base_report(&setup, "optimize", best.status.as_str().into(), &best.x, opts)?;
    report.iterations = Some(best.history.len().saturating_sub(1));
    report.best_restart = Some(best_r);
    report.seed = Some(seed0.wrapping_add(best_r as u64));
    report.wall_time_s = opts.wall_time(start);
    write_json(&out_path(out, "report.json"), &report)?;
    Ok(status_code(best.status))
}

pub fn spectrum(config: &ProblemConfig, params: &Path, out: &Path) -> Result<i32> {
    let setup = Setup::new(config)?;
    let alpha = ParamsFile::read(params)?.alpha_for(&setup)?;
    ensure_dir(out)?;
    write_spectrum(&out_path(out, "spectrum.csv"), &setup, &alpha)?;
    Ok(exit::SUCCESS)
}

/// Settings of the finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub steps: Option<usize>,
    pub fd_step: f64,
    pub tol: f64,
    pub abs_floor: f64,
    pub seed: u64,
    pub params: Option<PathBuf>,
}

#[derive(Serialize)]
struct GradcheckReport {
    checked: usize,
    max_rel_error: f64,
    tol: f64,
    failing: Vec<usize>,
    gradient_time_s: Option<f64>,
}

/// Relative error with the absolute floor applied to the denominator.
pub fn relative_error(adjoint: f64, fd: f64, abs_floor: f64) -> f64 {
    (adjoint - fd).abs() / fd.abs().max(abs_floor)
}

pub fn gradcheck(config: &ProblemConfig, gc: &GradcheckOptions, out: Option<&Path>, opts: &RunOptions) -> Result<i32> {
    let setup = Setup::with_steps(config, gc.steps)?;
    let pinned = setup.param.pinned();
    let alpha: Vec<f64> = match &gc.params {
        Some(p) => ParamsFile::read(p)?.alpha_for(&setup)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
            pinned
                .iter()
                .map(|&pin| {
                    let x = rng.gen_range(-1.0..=1.0) * setup.alpha_max;
                    if pin {
                        0.0
                    } else {
                        x
                    }
                })
                .collect()
        }
    };
    let start = Instant::now();
    let (_, grad) = setup.objective_gradient(&alpha, opts.threads)?;
    let gradient_time = opts.wall_time(start);
    let mut rows = Vec::new();
    let mut failing = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut probe = alpha.clone();
    for (i, &pin) in pinned.iter().enumerate() {
        if pin {
            continue;
        }
        let delta = gc.fd_step * alpha[i].abs().max(setup.alpha_max).max(f64::MIN_POSITIVE);
        probe[i] = alpha[i] + delta;
        let up = setup.objective(&probe, opts.threads)?.total;
        probe[i] = alpha[i] - delta;
        let down = setup.objective(&probe, opts.threads)?.total;
        probe[i] = alpha[i];
        let fd = (up - down) / (2.0 * delta);
        let rel = relative_error(grad[i], fd, gc.abs_floor);
        max_rel = max_rel.max(rel);
        if rel > gc.tol {
            failing.push(i);
        }
        rows.push(vec![i.to_string(), format!("{:?}", grad[i]), format!("{fd:?}"), format!("{rel:?}")]);
    }
    let report = GradcheckReport { checked: rows.len(), max_rel_error: max_rel, tol: gc.tol, failing, gradient_time_s: gradient_time };
    println!("{}", serde_json::to_string(&report).expect("serializable"));
    eprintln!("max relative error {max_rel:.3e} over {} components", report.checked);
    if !report.failing.is_empty() {
        eprintln!("failing indices: {:?}", report.failing);
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let header: Vec<String> = ["index", "adjoint", "finite_difference", "rel_error"].map(String::from).to_vec();
        write_csv(&out_path(dir, "gradcheck.csv"), &header, rows)?;
        write_json(&out_path(dir, "gradcheck.json"), &report)?;
    }
    Ok(if report.failing.is_empty() { exit::SUCCESS } else { exit::GRADCHECK })
}

/// Sweep grid in MHz.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub count: usize,
}

impl SweepGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 || !(self.max_mhz >= self.min_mhz) {
            return Err(CliError::Input(format!("invalid sweep grid {self:?}")));
        }
        if self.count == 1 {
            return Ok(vec![self.min_mhz]);
        }
        let span = self.max_mhz - self.min_mhz;
        Ok((0..self.count).map(|i| self.min_mhz + span * i as f64 / (self.count - 1) as f64).collect())
    }
}

pub fn risk_sweep(config: &ProblemConfig, params: &[PathBuf], grid: &SweepGrid, out: &Path, opts: &RunOptions) -> Result<i32> {
    let setup = Setup::new(config)?;
    config.risk()?;
    if params.is_empty() {
        return Err(CliError::Input("risk-sweep needs at least one --params file".into()));
    }
    let eps = grid.values()?;
    let mut rows = Vec::new();
    for path in params {
        let alpha = ParamsFile::read(path)?.alpha_for(&setup)?;
        for &e in &eps {
            let r = setup.perturbed(&alpha, mhz_to_rad(e), opts.threads)?;
            eprintln!("{}  eps = {e:+8.3} MHz  J1 = {:.4e}  J2 = {:.4e}", path.display(), r.j1, r.j2);
            rows.push(vec![path.display().to_string(), format!("{e:?}"), format!("{:?}", r.j1), format!("{:?}", r.j2)]);
        }
    }
    ensure_dir(out)?;
    let header: Vec<String> = ["params", "eps_mhz", "j1", "j2"].map(String::from).to_vec();
    write_csv(&out_path(out, "risk_sweep.csv"), &header, rows)?;
    Ok(exit::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid_is_inclusive() {
        let g = SweepGrid { min_mhz: -30.0, max_mhz: 30.0, count: 13 }.values().unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], -30.0);
        assert_eq!(g[6], 0.0);
        assert_eq!(g[12], 30.0);
        assert!(SweepGrid { min_mhz: 1.0, max_mhz: 0.0, count: 3 }.values().is_err());
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(2e-9, 1e-9, 1e-8) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stalled_has_its_own_code() {
        assert_eq!(status_code(Status::Stalled), exit::STALLED);
        assert_eq!(status_code(Status::MaxIters), exit::SUCCESS);
    }
}
