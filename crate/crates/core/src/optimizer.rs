// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Projected limited-memory BFGS for box-constrained minimization.
//!
//! Each iteration splits the variables into an active set (pinned, or at a
//! bound with the gradient pushing outward) and a free set. The two-loop
//! recursion runs on the free set only, the step is projected back into the
//! box, and an Armijo backtracking search along the projected path picks
//! the step length. Iterates are feasible at all times.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Number of stored curvature pairs; 0 gives projected gradient descent.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient ∞-norm falls to this value.
    pub grad_tol: f64,
    /// Stop when the infidelity reaches this value.
    pub infidelity_target: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_trials: usize,
    /// Fraction of variables whose active status may change before memory is cleared.
    pub reset_fraction: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory: 5,
            max_iters: 500,
            grad_tol: 1e-8,
            infidelity_target: Some(1e-4),
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            armijo: 1e-4,
            backtrack: 0.5,
            max_trials: 30,
            reset_fraction: 0.25,
        }
    }
}

/// Value and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Infidelity part of `value`; `NaN` when not applicable.
    pub j1: f64,
    /// Leakage part of `value`; `NaN` when not applicable.
    pub j2: f64,
    pub grad: Vec<f64>,
}

impl Evaluation {
    /// Evaluation of a plain function without infidelity/leakage split.
    pub fn plain(value: f64, grad: Vec<f64>) -> Self {
        Self { value, j1: f64::NAN, j2: f64::NAN, grad }
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j1: f64,
    pub j2: f64,
    pub total: f64,
    pub pg_norm: f64,
    pub step: f64,
    pub evaluations: usize,
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    GradTol,
    InfidelityTarget,
    MaxIters,
    /// No step satisfied the sufficient-decrease test.
    Stalled,
    /// The objective or gradient became non-finite.
    NonFinite,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::GradTol => "grad_tol",
            Status::InfidelityTarget => "infidelity_target",
            Status::MaxIters => "max_iters",
            Status::Stalled => "stalled",
            Status::NonFinite => "non_finite",
        }
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub eval: Evaluation,
    pub history: Vec<IterationRecord>,
    pub status: Status,
}

/// Random start with entries uniform on `[0, alpha_max/100]`; pinned entries are 0.
pub fn initialize(alpha_max: f64, seed: u64, pinned: &[bool]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = alpha_max / 100.0;
    pinned
        .iter()
        .map(|&p| {
            let x = if hi > 0.0 { rng.gen_range(0.0..=hi) } else { 0.0 };
            if p {
                0.0
            } else {
                x
            }
        })
        .collect()
}

fn project(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

/// Active flags: pinned, or at a bound with the gradient pointing out of the box.
fn active_set(x: &[f64], g: &[f64], fixed: &[bool], lo: f64, hi: f64) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(fixed)
        .map(|((&xi, &gi), &f)| f || (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0))
        .collect()
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter().zip(b).zip(free).filter(|(_, f)| **f).map(|((x, y), _)| x * y).sum()
}

/// Minimize `f` over the box `[lower, upper]` starting from `x0`.
///
/// Entries flagged in `fixed` keep their starting value. `f` returns the
/// value and gradient; an error from `f` aborts the run.
pub fn minimize<F>(config: &OptimizerConfig, x0: &[f64], fixed: &[bool], mut f: F) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    assert_eq!(x0.len(), fixed.len(), "fixed mask length");
    assert!(config.lower <= config.upper, "empty box");
    let (lo, hi) = (config.lower, config.upper);
    let width = hi - lo;
    let mut x: Vec<f64> = x0.iter().map(|&v| project(v, lo, hi)).collect();
    let mut cur = f(&x)?;
    let mut evaluations = 1;
    let mut history = Vec::new();
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut prev_active: Option<Vec<bool>> = None;
    let mut step = 0.0;

    if !cur.is_finite() {
        return Ok(Minimum { x, eval: cur, history, status: Status::NonFinite });
    }

    for iter in 0.. {
        let active = active_set(&x, &cur.grad, fixed, lo, hi);
        let free: Vec<bool> = active.iter().map(|a| !a).collect();
        let pg_norm = cur.grad.iter().zip(&free).filter(|(_, f)| **f).fold(0.0_f64, |m, (g, _)| m.max(g.abs()));
        history.push(IterationRecord {
            iter,
            j1: cur.j1,
            j2: cur.j2,
            total: cur.value,
            pg_norm,
            step,
            evaluations,
        });
        let status = if config.infidelity_target.is_some_and(|t| cur.j1 <= t) {
            Some(Status::InfidelityTarget)
        } else if pg_norm <= config.grad_tol {
            Some(Status::GradTol)
        } else if iter >= config.max_iters {
            Some(Status::MaxIters)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(Minimum { x, eval: cur, history, status });
        }

        if let Some(prev) = &prev_active {
            let changed = prev.iter().zip(&active).filter(|(a, b)| a != b).count();
            if changed as f64 > config.reset_fraction * x.len() as f64 {
                pairs.clear();
            }
        }
        prev_active = Some(active);

        let mut accepted = None;
        for attempt in 0..2 {
            let dir = direction(&cur.grad, &free, &pairs);
            let slope = masked_dot(&cur.grad, &dir, &free);
            let (dir, slope) = if slope < 0.0 {
                (dir, slope)
            } else {
                pairs.clear();
                let d: Vec<f64> = cur.grad.iter().zip(&free).map(|(g, f)| if *f { -g } else { 0.0 }).collect();
                let s = masked_dot(&cur.grad, &d, &free);
                (d, s)
            };
            if slope >= 0.0 {
                break;
            }
            let dmax = dir.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            let mut lambda = if pairs.is_empty() && width.is_finite() { (0.1 * width / dmax).min(1.0) } else { 1.0 };
            for _ in 0..config.max_trials {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&dir)
                    .zip(fixed)
                    .map(|((&xi, &di), &fx)| if fx { xi } else { project(xi + lambda * di, lo, hi) })
                    .collect();
                let moved: f64 = trial.iter().zip(&x).zip(&cur.grad).map(|((t, xi), g)| g * (t - xi)).sum();
                if trial == x {
                    break;
                }
                let next = f(&trial)?;
                evaluations += 1;
                if !next.is_finite() {
                    return Ok(Minimum { x, eval: cur, history, status: Status::NonFinite });
                }
                if next.value <= cur.value + config.armijo * moved {
                    accepted = Some((trial, next, lambda));
                    break;
                }
                lambda *= config.backtrack;
            }
            if accepted.is_some() || pairs.is_empty() || attempt == 1 {
                break;
            }
            pairs.clear();
        }

        let Some((xn, next, lambda)) = accepted else {
            return Ok(Minimum { x, eval: cur, history, status: Status::Stalled });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if config.memory > 0 && sy > 1e-12 * y.iter().map(|v| v * v).sum::<f64>().sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt() {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        x = xn;
        cur = next;
        step = lambda;
    }
    unreachable!()
}

/// `−H g` restricted to the free set by the two-loop recursion.
fn direction(g: &[f64], free: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(free).map(|(g, f)| if *f { *g } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    let mut usable = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let sy = masked_dot(s, y, free);
        if sy <= 0.0 {
            continue;
        }
        let a = masked_dot(s, &q, free) / sy;
        for ((qi, yi), f) in q.iter_mut().zip(y).zip(free) {
            if *f {
                *qi -= a * yi;
            }
        }
        alphas.push(a);
        usable.push((s, y, sy));
    }
    if let Some((_, y, sy)) = usable.first() {
        let yy = masked_dot(y, y, free);
        if yy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y, sy), a) in usable.iter().zip(&alphas).rev() {
        let b = masked_dot(y, &q, free) / sy;
        for ((qi, si), f) in q.iter_mut().zip(s.iter()).zip(free) {
            if *f {
                *qi += (a - b) * si;
            }
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
