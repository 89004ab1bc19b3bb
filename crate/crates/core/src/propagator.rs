// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Störmer-Verlet time stepping of the real-valued Schrödinger system.
//!
//! With `ψ = u − i v` and `H = K + i S`, the state obeys
//! `u' = S u − K v`, `v' = K u + S v`. One step from `t_n` to `t_{n+1}` uses
//! envelope values at `t_n`, `t_n + h/2` and `t_{n+1}` and two implicit
//! solves with `I − (h/2) S`:
//!
//! ```text
//! (I − h/2 S_h) V1 = v + h/2 K_h u
//! (I − h/2 S_1) U2 = u + h/2 (S_0 u − (K_0 + K_1) V1)
//! v' = v + h/2 (K_h (u + U2) + 2 S_h V1),   u' = U2
//! ```
//!
//! The scheme is algebraically invertible; [`reverse_column`] recovers the
//! state at `t_n` from the state at `t_{n+1}`.

use crate::controls::ControlParameterization;
use crate::error::{Error, Result};
use crate::gates::EssentialMap;
use crate::linalg::{dot, DenseLu};
use crate::model::CompositeSystem;

/// Source of envelope values `(Re d_q(t), Im d_q(t))`.
pub trait ControlSource: Sync {
    fn envelope_at(&self, t: f64, re: &mut [f64], im: &mut [f64]);
}

/// B-spline controls evaluated at a fixed parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct SplineControls<'a> {
    pub param: &'a ControlParameterization,
    pub alpha: &'a [f64],
}

impl ControlSource for SplineControls<'_> {
    #[inline]
    fn envelope_at(&self, t: f64, re: &mut [f64], im: &mut [f64]) {
        self.param.envelope_into(self.alpha, t, re, im);
    }
}

/// Time-independent envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantControls {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ConstantControls {
    pub fn zero(num_subsystems: usize) -> Self {
        Self { re: vec![0.0; num_subsystems], im: vec![0.0; num_subsystems] }
    }
}

impl ControlSource for ConstantControls {
    fn envelope_at(&self, _t: f64, re: &mut [f64], im: &mut [f64]) {
        re.copy_from_slice(&self.re);
        im.copy_from_slice(&self.im);
    }
}

/// Uniform grid `t_n = n T / M`, step `h = T / M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(Error::InvalidGrid(format!("need T > 0 and M >= 1, got T = {horizon}, M = {steps}")));
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_n`, rounded so that `t_M = T` exactly.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.horizon / self.steps as f64
    }
}

/// How the spectral radius of the Hamiltonian is bounded for step selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateBound {
    /// Row-sum bound on the assembled matrices.
    Gershgorin,
    /// Eigenvalues of the Hamiltonian frozen at the envelope bound.
    #[default]
    Spectral,
}

/// Step count returned when the fastest rate is zero.
pub const DEGENERATE_MIN_STEPS: usize = 100;

/// Number of steps resolving the fastest rate with `samples_per_period` samples.
///
/// `M = ceil(T C_P max(ρ, max|Ω|) / 2π)`. A zero rate returns
/// `max(min_steps, 100)`.
pub fn estimate_steps(
    system: &CompositeSystem,
    d_inf: &[f64],
    carriers: &[f64],
    horizon: f64,
    samples_per_period: f64,
    min_steps: usize,
    bound: RateBound,
) -> Result<usize> {
    if !(samples_per_period > 2.0) {
        return Err(Error::InvalidGrid(format!(
            "samples per period must exceed 2 for stability, got {samples_per_period}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
    }
    let rho = match bound {
        RateBound::Gershgorin => system.gershgorin_bound(d_inf),
        RateBound::Spectral => system.frozen_spectral_radius(d_inf),
    };
    let rate = carriers.iter().fold(rho, |m, w| m.max(w.abs()));
    if !rate.is_finite() {
        return Err(Error::NonFinite("spectral radius".into()));
    }
    if rate == 0.0 {
        return Ok(min_steps.max(DEGENERATE_MIN_STEPS));
    }
    let m = (horizon * samples_per_period * rate / (2.0 * std::f64::consts::PI)).ceil();
    Ok((m as usize).max(1))
}

/// Envelope values at `t_n`, `t_n + h/2` and `t_{n+1}` (indices 0, 1, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct StepEnvelopes {
    pub times: [f64; 3],
    pub re: [Vec<f64>; 3],
    pub im: [Vec<f64>; 3],
}

impl StepEnvelopes {
    pub fn new(num_subsystems: usize) -> Self {
        let z = || vec![0.0; num_subsystems];
        Self { times: [0.0; 3], re: [z(), z(), z()], im: [z(), z(), z()] }
    }

    pub fn load<C: ControlSource + ?Sized>(&mut self, controls: &C, grid: &TimeGrid, n: usize) {
        let (t0, t1) = (grid.time(n), grid.time(n + 1));
        self.times = [t0, 0.5 * (t0 + t1), t1];
        for i in 0..3 {
            controls.envelope_at(self.times[i], &mut self.re[i], &mut self.im[i]);
        }
    }
}

/// Stage vectors of one column over one step.
///
/// `u1 = u^n`, `v0 = v^n`, `u2 = U^{n,2} = u^{n+1}`, `v1 = V^{n,1} = V^{n,2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stages {
    pub u1: Vec<f64>,
    pub v0: Vec<f64>,
    pub u2: Vec<f64>,
    pub v1: Vec<f64>,
}

impl Stages {
    pub fn new(n: usize) -> Self {
        Self { u1: vec![0.0; n], v0: vec![0.0; n], u2: vec![0.0; n], v1: vec![0.0; n] }
    }
}

/// `lu := I + scale · S(im)`, factored.
pub fn factor_stage_matrix(system: &CompositeSystem, im: &[f64], scale: f64, lu: &mut DenseLu) -> Result<()> {
    system.fill_identity_plus_s(im, scale, lu.matrix_mut());
    lu.factor_in_place()
}

/// One forward step of a single column.
///
/// `a_half` and `a_one` hold the factored `I − (h/2) S` at `t_n + h/2` and `t_{n+1}`.
/// On return `(u, v)` is the state at `t_{n+1}` and `stages` is filled.
#[allow(clippy::too_many_arguments)]
pub fn forward_column(
    system: &CompositeSystem,
    h: f64,
    env: &StepEnvelopes,
    a_half: &DenseLu,
    a_one: &DenseLu,
    u: &mut [f64],
    v: &mut [f64],
    st: &mut Stages,
) -> Result<()> {
    let hh = 0.5 * h;
    let [re0, reh, re1] = &env.re;
    let [im0, imh, _] = &env.im;
    st.u1.copy_from_slice(u);
    st.v0.copy_from_slice(v);

    st.v1.copy_from_slice(v);
    system.apply_k_add(reh, hh, u, &mut st.v1);
    a_half.solve_in_place(&mut st.v1);

    st.u2.copy_from_slice(u);
    system.apply_s_add(im0, hh, u, &mut st.u2);
    system.apply_k_add(re0, -hh, &st.v1, &mut st.u2);
    system.apply_k_add(re1, -hh, &st.v1, &mut st.u2);
    a_one.solve_in_place(&mut st.u2);

    system.apply_k_add(reh, hh, &st.u1, v);
    system.apply_k_add(reh, hh, &st.u2, v);
    system.apply_s_add(imh, h, &st.v1, v);
    u.copy_from_slice(&st.u2);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("state after forward step".into()));
    }
    Ok(())
}

/// One reverse step of a single column, the exact inverse of [`forward_column`].
///
/// `b_half` and `b_zero` hold the factored `I + (h/2) S` at `t_n + h/2` and `t_n`.
/// On entry `(u, v)` is the state at `t_{n+1}`; on return it is the state at `t_n`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_column(
    system: &CompositeSystem,
    h: f64,
    env: &StepEnvelopes,
    b_half: &DenseLu,
    b_zero: &DenseLu,
    u: &mut [f64],
    v: &mut [f64],
    st: &mut Stages,
) -> Result<()> {
    let hh = 0.5 * h;
    let [re0, reh, re1] = &env.re;
    let [_, imh, im1] = &env.im;
    st.u2.copy_from_slice(u);

    st.v1.copy_from_slice(v);
    system.apply_k_add(reh, -hh, u, &mut st.v1);
    b_half.solve_in_place(&mut st.v1);

    st.u1.copy_from_slice(u);
    system.apply_s_add(im1, -hh, &st.u2, &mut st.u1);
    system.apply_k_add(re0, hh, &st.v1, &mut st.u1);
    system.apply_k_add(re1, hh, &st.v1, &mut st.u1);
    b_zero.solve_in_place(&mut st.u1);

    st.v0.copy_from_slice(&st.v1);
    system.apply_k_add(reh, -hh, &st.u1, &mut st.v0);
    system.apply_s_add(imh, -hh, &st.v1, &mut st.v0);
    u.copy_from_slice(&st.u1);
    v.copy_from_slice(&st.v0);
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("state after reverse step".into()));
    }
    Ok(())
}

/// Real and imaginary parts of the solution operator columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RealState {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl RealState {
    /// `u = U₀`, `v = 0`.
    pub fn initial(map: &EssentialMap, dim: usize) -> Self {
        let u = map
            .lifts()
            .iter()
            .map(|&k| {
                let mut c = vec![0.0; dim];
                c[k] = 1.0;
                c
            })
            .collect::<Vec<_>>();
        let v = vec![vec![0.0; dim]; u.len()];
        Self { u, v }
    }

    pub fn from_columns(u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Self {
        Self { u, v }
    }

    pub fn num_columns(&self) -> usize {
        self.u.len()
    }

    /// `‖(u_j, v_j)‖₂` per column.
    pub fn column_norms(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(u, v)| (dot(u, u) + dot(v, v)).sqrt()).collect()
    }
}

/// Receiver of per-step stage data.
pub trait StageSink {
    fn accept(&mut self, step: usize, column: usize, stages: &Stages);
}

impl StageSink for () {
    fn accept(&mut self, _: usize, _: usize, _: &Stages) {}
}

/// Reusable buffers for stepping all columns.
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    pub env: StepEnvelopes,
    pub lu_half: DenseLu,
    pub lu_end: DenseLu,
    pub stages: Stages,
}

impl StepWorkspace {
    pub fn new(system: &CompositeSystem) -> Self {
        let n = system.total_dim();
        Self {
            env: StepEnvelopes::new(system.num_subsystems()),
            lu_half: DenseLu::new(n),
            lu_end: DenseLu::new(n),
            stages: Stages::new(n),
        }
    }
}

/// Advance every column from `t_n` to `t_{n+1}`.
pub fn step_forward<C: ControlSource + ?Sized, S: StageSink + ?Sized>(
    system: &CompositeSystem,
    controls: &C,
    grid: &TimeGrid,
    n: usize,
    state: &mut RealState,
    ws: &mut StepWorkspace,
    sink: &mut S,
) -> Result<()> {
    let h = grid.step();
    ws.env.load(controls, grid, n);
    factor_stage_matrix(system, &ws.env.im[1], -0.5 * h, &mut ws.lu_half)?;
    factor_stage_matrix(system, &ws.env.im[2], -0.5 * h, &mut ws.lu_end)?;
    for (j, (u, v)) in state.u.iter_mut().zip(state.v.iter_mut()).enumerate() {
        forward_column(system, h, &ws.env, &ws.lu_half, &ws.lu_end, u, v, &mut ws.stages)?;
        sink.accept(n, j, &ws.stages);
    }
    Ok(())
}

/// Move every column from `t_{n+1}` back to `t_n`.
pub fn step_reverse<C: ControlSource + ?Sized>(
    system: &CompositeSystem,
    controls: &C,
    grid: &TimeGrid,
    n: usize,
    state: &mut RealState,
    ws: &mut StepWorkspace,
) -> Result<()> {
    let h = grid.step();
    ws.env.load(controls, grid, n);
    factor_stage_matrix(system, &ws.env.im[1], 0.5 * h, &mut ws.lu_half)?;
    factor_stage_matrix(system, &ws.env.im[0], 0.5 * h, &mut ws.lu_end)?;
    for (u, v) in state.u.iter_mut().zip(state.v.iter_mut()) {
        reverse_column(system, h, &ws.env, &ws.lu_half, &ws.lu_end, u, v, &mut ws.stages)?;
    }
    Ok(())
}

/// Evolve `state` from `t = 0` to `T`, feeding every step to `sink`.
pub fn propagate<C: ControlSource + ?Sized, S: StageSink + ?Sized>(
    system: &CompositeSystem,
    controls: &C,
    grid: &TimeGrid,
    state: &mut RealState,
    sink: &mut S,
) -> Result<()> {
    let mut ws = StepWorkspace::new(system);
    for n in 0..grid.steps() {
        step_forward(system, controls, grid, n, state, &mut ws, sink)?;
    }
    Ok(())
}

/// `ℋ(u, v) = ½ (uᵀK u + vᵀK v) + uᵀ S v`, conserved for time-independent `H`.
pub fn hamiltonian_functional(system: &CompositeSystem, re: &[f64], im: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let mut ku = vec![0.0; u.len()];
    let mut kv = vec![0.0; u.len()];
    let mut sv = vec![0.0; u.len()];
    system.apply_k_add(re, 1.0, u, &mut ku);
    system.apply_k_add(re, 1.0, v, &mut kv);
    system.apply_s_add(im, 1.0, v, &mut sv);
    0.5 * (dot(u, &ku) + dot(v, &kv)) + dot(u, &sv)
}
