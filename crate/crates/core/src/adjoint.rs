// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Exact gradient of the discrete objective by a discrete adjoint sweep.
//!
//! The backward recursion is the transpose of the Störmer-Verlet step. With
//! `c = h/T`, incoming adjoints `(μ', ν')` and forward stages `(U1, U2, V1)`:
//!
//! ```text
//! (I + h/2 S_1) X  = μ' + h/2 K_h ν' + c W U2
//! (I + h/2 S_h) Y1 = ν' − h/2 ((K_0 + K_1) X + S_h ν') + 2c W V1
//! μ = X − h/2 S_0 X + h/2 K_h Y1 + c W U1,   ν = Y1,   Y2 = ν'
//! ```
//!
//! Each step contributes
//! `h/2 (⟨S'_0 U1 + S'_1 U2 − (K'_0 + K'_1) V1, X⟩ + ⟨K'_h U1 + S'_h V1, Y1⟩ + ⟨K'_h U2 + S'_h V1, Y2⟩)`
//! to the gradient. `K'` and `S'` are envelope derivatives times
//! `a_q + a_qᵀ` and `a_q − a_qᵀ`, so only `2Q` contractions per time point
//! are formed and then spread over the active spline coefficients.
//!
//! The forward states are recovered either by stepping backwards in time
//! (no storage) or by recomputing from stored checkpoints.

use std::ops::Range;
use std::thread;

use num_complex::Complex64;

use crate::controls::ControlParameterization;
use crate::error::{Error, Result};
use crate::gates::GateProblem;
use crate::linalg::DenseLu;
use crate::model::CompositeSystem;
use crate::objective::{column_overlap, LeakageAccumulator, ObjectiveReport};
use crate::propagator::{
    factor_stage_matrix, forward_column, reverse_column, step_forward, RealState, SplineControls, StepEnvelopes,
    StepWorkspace, Stages, TimeGrid,
};

/// How forward states are made available to the backward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrajectoryMode {
    /// Step the state backwards alongside the adjoint.
    #[default]
    Replay,
    /// Store every `every`-th state and recompute each segment forward.
    Checkpoint { every: usize },
}

/// Gradient evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientOptions {
    pub mode: TrajectoryMode,
    /// Worker threads over essential columns.
    pub threads: usize,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { mode: TrajectoryMode::Replay, threads: 1 }
    }
}

/// Adjoint variables `(μ, ν)` per column.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

/// Terminal adjoints: the gradient of `J1` with respect to the final `(u, v)`.
pub fn terminal_conditions(problem: &GateProblem, state: &RealState, first: usize, overlap: Complex64) -> AdjointState {
    let e = problem.num_columns() as f64;
    let scale = -2.0 / (e * e);
    let (sr, si) = (overlap.re, overlap.im);
    let (mu, nu) = (0..state.num_columns())
        .map(|i| {
            let (du, dv) = (problem.target_u(first + i), problem.target_v(first + i));
            let mu = du.iter().zip(dv).map(|(a, b)| scale * (sr * a - si * b)).collect();
            let nu = du.iter().zip(dv).map(|(a, b)| scale * (sr * b + si * a)).collect();
            (mu, nu)
        })
        .unzip();
    AdjointState { mu, nu }
}

/// Contraction weights at the three time points of a step, per subsystem.
#[derive(Debug, Clone)]
struct StepWeights {
    re: [Vec<f64>; 3],
    im: [Vec<f64>; 3],
}

impl StepWeights {
    fn new(q: usize) -> Self {
        let z = || vec![0.0; q];
        Self { re: [z(), z(), z()], im: [z(), z(), z()] }
    }

    fn clear(&mut self) {
        self.re.iter_mut().chain(self.im.iter_mut()).flatten().for_each(|x| *x = 0.0);
    }

    fn distribute(&self, param: &ControlParameterization, env: &StepEnvelopes, grad: &mut [f64]) {
        for i in 0..3 {
            param.accumulate_gradient(env.times[i], &self.re[i], &self.im[i], grad);
        }
    }
}

/// Scratch vectors for one adjoint step.
#[derive(Debug, Clone)]
struct AdjointScratch {
    x: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    y12: Vec<f64>,
}

impl AdjointScratch {
    fn new(n: usize) -> Self {
        Self { x: vec![0.0; n], y1: vec![0.0; n], y2: vec![0.0; n], y12: vec![0.0; n] }
    }
}

/// One backward step of a single column, accumulating contraction weights.
///
/// `b_one` and `b_half` hold the factored `I + (h/2) S` at `t_{n+1}` and
/// `t_n + h/2`. On entry `(mu, nu)` are the adjoints at `n + 1`.
#[allow(clippy::too_many_arguments)]
fn adjoint_column(
    system: &CompositeSystem,
    weights: &[f64],
    h: f64,
    horizon: f64,
    env: &StepEnvelopes,
    b_one: &DenseLu,
    b_half: &DenseLu,
    st: &Stages,
    mu: &mut [f64],
    nu: &mut [f64],
    sc: &mut AdjointScratch,
    acc: &mut StepWeights,
) {
    let hh = 0.5 * h;
    let c = h / horizon;
    let [re0, reh, re1] = &env.re;
    let [im0, imh, _] = &env.im;

    sc.y2.copy_from_slice(nu);

    sc.x.copy_from_slice(mu);
    system.apply_k_add(reh, hh, &sc.y2, &mut sc.x);
    for ((x, w), u2) in sc.x.iter_mut().zip(weights).zip(&st.u2) {
        *x += c * w * u2;
    }
    b_one.solve_in_place(&mut sc.x);

    sc.y1.copy_from_slice(&sc.y2);
    system.apply_k_add(re0, -hh, &sc.x, &mut sc.y1);
    system.apply_k_add(re1, -hh, &sc.x, &mut sc.y1);
    system.apply_s_add(imh, -hh, &sc.y2, &mut sc.y1);
    for ((y, w), v1) in sc.y1.iter_mut().zip(weights).zip(&st.v1) {
        *y += 2.0 * c * w * v1;
    }
    b_half.solve_in_place(&mut sc.y1);

    mu.copy_from_slice(&sc.x);
    system.apply_s_add(im0, -hh, &sc.x, mu);
    system.apply_k_add(reh, hh, &sc.y1, mu);
    for ((m, w), u1) in mu.iter_mut().zip(weights).zip(&st.u1) {
        *m += c * w * u1;
    }
    nu.copy_from_slice(&sc.y1);

    for ((s, a), b) in sc.y12.iter_mut().zip(&sc.y1).zip(&sc.y2) {
        *s = a + b;
    }
    for q in 0..system.num_subsystems() {
        let op = system.ops().lowering(q);
        let kx = op.sym_form(&sc.x, &st.v1);
        acc.re[0][q] -= hh * kx;
        acc.re[2][q] -= hh * kx;
        acc.im[0][q] += hh * op.asym_form(&sc.x, &st.u1);
        acc.im[2][q] += hh * op.asym_form(&sc.x, &st.u2);
        acc.re[1][q] += hh * (op.sym_form(&sc.y1, &st.u1) + op.sym_form(&sc.y2, &st.u2));
        acc.im[1][q] += hh * op.asym_form(&sc.y12, &st.v1);
    }
}

/// Initial state restricted to the columns in `cols`.
fn initial_chunk(problem: &GateProblem, cols: &Range<usize>) -> RealState {
    let n = problem.system().total_dim();
    let u = cols
        .clone()
        .map(|j| {
            let mut c = vec![0.0; n];
            c[problem.essential_map().lift(j)] = 1.0;
            c
        })
        .collect::<Vec<_>>();
    let v = vec![vec![0.0; n]; u.len()];
    RealState::from_columns(u, v)
}

struct ForwardChunk {
    state: RealState,
    weighted_sum: f64,
    max_guard_pop: f64,
    checkpoints: Vec<RealState>,
}

fn forward_chunk(
    problem: &GateProblem,
    controls: &SplineControls<'_>,
    grid: &TimeGrid,
    cols: &Range<usize>,
    checkpoint_every: Option<usize>,
) -> Result<ForwardChunk> {
    let system = problem.system();
    let mut state = initial_chunk(problem, cols);
    let mut ws = StepWorkspace::new(system);
    let mut sink = LeakageAccumulator::new(problem);
    let mut checkpoints = Vec::new();
    for n in 0..grid.steps() {
        if let Some(k) = checkpoint_every {
            if n % k == 0 {
                checkpoints.push(state.clone());
            }
        }
        step_forward(system, controls, grid, n, &mut state, &mut ws, &mut sink)?;
    }
    Ok(ForwardChunk {
        state,
        weighted_sum: sink.weighted_sum,
        max_guard_pop: sink.max_guard_pop,
        checkpoints,
    })
}

fn backward_replay(
    problem: &GateProblem,
    param: &ControlParameterization,
    controls: &SplineControls<'_>,
    grid: &TimeGrid,
    mut state: RealState,
    mut adj: AdjointState,
) -> Result<Vec<f64>> {
    let system = problem.system();
    let n = system.total_dim();
    let h = grid.step();
    let mut env = StepEnvelopes::new(system.num_subsystems());
    let (mut b_half, mut b_zero, mut b_one) = (DenseLu::new(n), DenseLu::new(n), DenseLu::new(n));
    let mut st = Stages::new(n);
    let mut sc = AdjointScratch::new(n);
    let mut acc = StepWeights::new(system.num_subsystems());
    let mut grad = vec![0.0; param.num_params()];

    for step in (0..grid.steps()).rev() {
        env.load(controls, grid, step);
        if step + 1 == grid.steps() {
            factor_stage_matrix(system, &env.im[2], 0.5 * h, &mut b_one)?;
        } else {
            std::mem::swap(&mut b_one, &mut b_zero);
        }
        factor_stage_matrix(system, &env.im[1], 0.5 * h, &mut b_half)?;
        factor_stage_matrix(system, &env.im[0], 0.5 * h, &mut b_zero)?;
        acc.clear();
        for j in 0..state.num_columns() {
            reverse_column(system, h, &env, &b_half, &b_zero, &mut state.u[j], &mut state.v[j], &mut st)?;
            adjoint_column(
                system,
                problem.weights(),
                h,
                grid.horizon(),
                &env,
                &b_one,
                &b_half,
                &st,
                &mut adj.mu[j],
                &mut adj.nu[j],
                &mut sc,
                &mut acc,
            );
        }
        acc.distribute(param, &env, &mut grad);
    }
    check_finite(&grad)?;
    Ok(grad)
}

fn backward_checkpointed(
    problem: &GateProblem,
    param: &ControlParameterization,
    controls: &SplineControls<'_>,
    grid: &TimeGrid,
    every: usize,
    checkpoints: &[RealState],
    mut adj: AdjointState,
) -> Result<Vec<f64>> {
    let system = problem.system();
    let n = system.total_dim();
    let h = grid.step();
    let cols = adj.mu.len();
    let mut env = StepEnvelopes::new(system.num_subsystems());
    let mut fwd = StepWorkspace::new(system);
    let (mut b_half, mut b_one) = (DenseLu::new(n), DenseLu::new(n));
    let mut sc = AdjointScratch::new(n);
    let mut acc = StepWeights::new(system.num_subsystems());
    let mut grad = vec![0.0; param.num_params()];
    let mut segment: Vec<Vec<Stages>> = Vec::new();

    for (seg, start_state) in checkpoints.iter().enumerate().rev() {
        let start = seg * every;
        let end = (start + every).min(grid.steps());
        let mut state = start_state.clone();
        segment.resize_with(end - start, || vec![Stages::new(n); cols]);
        for (i, stages) in segment.iter_mut().enumerate().take(end - start) {
            let step = start + i;
            fwd.env.load(controls, grid, step);
            factor_stage_matrix(system, &fwd.env.im[1], -0.5 * h, &mut fwd.lu_half)?;
            factor_stage_matrix(system, &fwd.env.im[2], -0.5 * h, &mut fwd.lu_end)?;
            for (j, st) in stages.iter_mut().enumerate() {
                forward_column(system, h, &fwd.env, &fwd.lu_half, &fwd.lu_end, &mut state.u[j], &mut state.v[j], st)?;
            }
        }
        for step in (start..end).rev() {
            env.load(controls, grid, step);
            factor_stage_matrix(system, &env.im[2], 0.5 * h, &mut b_one)?;
            factor_stage_matrix(system, &env.im[1], 0.5 * h, &mut b_half)?;
            acc.clear();
            for (j, st) in segment[step - start].iter().enumerate() {
                adjoint_column(
                    system,
                    problem.weights(),
                    h,
                    grid.horizon(),
                    &env,
                    &b_one,
                    &b_half,
                    st,
                    &mut adj.mu[j],
                    &mut adj.nu[j],
                    &mut sc,
                    &mut acc,
                );
            }
            acc.distribute(param, &env, &mut grad);
        }
    }
    check_finite(&grad)?;
    Ok(grad)
}

fn check_finite(grad: &[f64]) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("gradient".into()))
    }
}

fn column_chunks(cols: usize, threads: usize) -> Vec<Range<usize>> {
    let workers = threads.clamp(1, cols.max(1));
    let per = cols.div_ceil(workers);
    (0..cols).step_by(per.max(1)).map(|s| s..(s + per).min(cols)).collect()
}

/// Run `f` on every chunk, on scoped threads when there is more than one.
fn run_chunks<T: Send, F>(chunks: &[Range<usize>], f: F) -> Vec<T>
where
    F: Fn(usize, &Range<usize>) -> T + Sync,
{
    if chunks.len() == 1 {
        return vec![f(0, &chunks[0])];
    }
    thread::scope(|s| {
        let handles: Vec<_> = chunks.iter().enumerate().map(|(i, c)| {
            let f = &f;
            s.spawn(move || f(i, c))
        }).collect();
        handles.into_iter().map(|h| h.join().expect("column worker panicked")).collect()
    })
}

fn check_inputs(problem: &GateProblem, param: &ControlParameterization, alpha: &[f64], grid: &TimeGrid) -> Result<()> {
    if alpha.len() != param.num_params() {
        return Err(Error::InvalidParameters(format!(
            "parameter vector has {} entries, expected {}",
            alpha.len(),
            param.num_params()
        )));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("parameter vector".into()));
    }
    if param.num_subsystems() != problem.system().num_subsystems() {
        return Err(Error::InvalidParameters(format!(
            "controls drive {} subsystems, system has {}",
            param.num_subsystems(),
            problem.system().num_subsystems()
        )));
    }
    if (grid.horizon() - problem.horizon()).abs() > 1e-12 * problem.horizon() {
        return Err(Error::InvalidGrid("grid horizon differs from the gate horizon".into()));
    }
    Ok(())
}

fn forward_all(
    problem: &GateProblem,
    controls: &SplineControls<'_>,
    grid: &TimeGrid,
    chunks: &[Range<usize>],
    checkpoint_every: Option<usize>,
) -> Result<(Vec<ForwardChunk>, ObjectiveReport)> {
    let outs: Vec<ForwardChunk> = run_chunks(chunks, |_, c| forward_chunk(problem, controls, grid, c, checkpoint_every))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut overlap = Complex64::new(0.0, 0.0);
    let (mut wsum, mut guard) = (0.0, 0.0_f64);
    for (out, cols) in outs.iter().zip(chunks) {
        for (i, j) in cols.clone().enumerate() {
            overlap += column_overlap(&out.state.u[i], &out.state.v[i], problem.target_u(j), problem.target_v(j));
        }
        wsum += out.weighted_sum;
        guard = guard.max(out.max_guard_pop);
    }
    let j2 = grid.step() / (2.0 * grid.horizon()) * wsum;
    let report = ObjectiveReport::new(overlap, problem.num_columns(), j2, guard);
    if !report.total.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    Ok((outs, report))
}

/// Objective without gradient.
pub fn evaluate(
    problem: &GateProblem,
    param: &ControlParameterization,
    alpha: &[f64],
    grid: &TimeGrid,
    threads: usize,
) -> Result<ObjectiveReport> {
    check_inputs(problem, param, alpha, grid)?;
    let controls = SplineControls { param, alpha };
    let chunks = column_chunks(problem.num_columns(), threads);
    Ok(forward_all(problem, &controls, grid, &chunks, None)?.1)
}

/// Objective and its exact gradient with respect to every parameter.
///
/// Pinned parameters get a zero gradient.
pub fn gradient(
    problem: &GateProblem,
    param: &ControlParameterization,
    alpha: &[f64],
    grid: &TimeGrid,
    opts: GradientOptions,
) -> Result<(ObjectiveReport, Vec<f64>)> {
    check_inputs(problem, param, alpha, grid)?;
    let every = match opts.mode {
        TrajectoryMode::Replay => None,
        TrajectoryMode::Checkpoint { every: 0 } => {
            return Err(Error::InvalidGrid("checkpoint interval must be positive".into()))
        }
        TrajectoryMode::Checkpoint { every } => Some(every),
    };
    let controls = SplineControls { param, alpha };
    let chunks = column_chunks(problem.num_columns(), opts.threads);
    let (outs, report) = forward_all(problem, &controls, grid, &chunks, every)?;

    let partials: Vec<Result<Vec<f64>>> = run_chunks(&chunks, |i, cols| {
        let out = &outs[i];
        let adj = terminal_conditions(problem, &out.state, cols.start, report.overlap);
        match every {
            None => backward_replay(problem, param, &controls, grid, out.state.clone(), adj),
            Some(k) => backward_checkpointed(problem, param, &controls, grid, k, &out.checkpoints, adj),
        }
    });
    let mut grad = vec![0.0; param.num_params()];
    for p in partials {
        for (g, x) in grad.iter_mut().zip(p?) {
            *g += x;
        }
    }
    for (g, &pin) in grad.iter_mut().zip(param.pinned()) {
        if pin {
            *g = 0.0;
        }
    }
    Ok((report, grad))
}
