// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Gate infidelity, guard leakage and the risk-neutral quadrature wrapper.
//!
//! The infidelity is `J1 = 1 − |S|²/E²` where `S = ⟨U_T, V_tg^{rw}⟩_F`. In real
//! form, with target columns `d = dᵘ − i dᵛ`,
//! `S = Σ_j (⟨u_j, dᵘ_j⟩ + ⟨v_j, dᵛ_j⟩) + i Σ_j (⟨v_j, dᵘ_j⟩ − ⟨u_j, dᵛ_j⟩)`.
//!
//! The leakage `J2` applies the trapezoidal rule to the `u` stages and the
//! midpoint rule to the `v` stage of every step:
//! `J2 = h/(2T) Σ_n Σ_j (U1ᵀWU1 + U2ᵀWU2 + 2 V1ᵀWV1)`.

use std::thread;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::GateProblem;
use crate::linalg::dot;
use crate::model::CompositeSystem;
use crate::propagator::{RealState, StageSink, Stages};

/// Objective value and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveReport {
    pub j1: f64,
    pub j2: f64,
    pub total: f64,
    pub overlap: Complex64,
    pub max_guard_pop: f64,
}

impl ObjectiveReport {
    pub fn new(overlap: Complex64, essential_dim: usize, j2: f64, max_guard_pop: f64) -> Self {
        let j1 = infidelity(overlap, essential_dim);
        Self { j1, j2, total: j1 + j2, overlap, max_guard_pop }
    }
}

/// `1 − |S|²/E²`, clamped into `[0, 1]` against round-off.
pub fn infidelity(overlap: Complex64, essential_dim: usize) -> f64 {
    let e = essential_dim as f64;
    (1.0 - overlap.norm_sqr() / (e * e)).clamp(0.0, 1.0)
}

/// Overlap of one column with its target.
#[inline]
pub fn column_overlap(u: &[f64], v: &[f64], du: &[f64], dv: &[f64]) -> Complex64 {
    Complex64::new(dot(u, du) + dot(v, dv), dot(v, du) - dot(u, dv))
}

/// Overlap of the final columns `first..` with the rotating-frame target.
pub fn overlap(problem: &GateProblem, state: &RealState, first: usize) -> Complex64 {
    state
        .u
        .iter()
        .zip(&state.v)
        .enumerate()
        .map(|(i, (u, v))| column_overlap(u, v, problem.target_u(first + i), problem.target_v(first + i)))
        .sum()
}

/// Guard population `Σ_guard (u² + v²)` of one column.
pub fn guard_population(guard_mask: &[bool], u: &[f64], v: &[f64]) -> f64 {
    guard_mask
        .iter()
        .zip(u.iter().zip(v))
        .filter(|(g, _)| **g)
        .map(|(_, (a, b))| a * a + b * b)
        .sum()
}

/// Stage sink collecting the unscaled leakage sum and the peak guard population.
#[derive(Debug, Clone)]
pub struct LeakageAccumulator<'a> {
    weights: &'a [f64],
    guard_mask: &'a [bool],
    /// `Σ (U1ᵀWU1 + U2ᵀWU2 + 2 V1ᵀWV1)` over steps and columns.
    pub weighted_sum: f64,
    /// Maximum guard population at the start of any step.
    pub max_guard_pop: f64,
}

impl<'a> LeakageAccumulator<'a> {
    pub fn new(problem: &'a GateProblem) -> Self {
        Self {
            weights: problem.weights(),
            guard_mask: problem.essential_map().guard_mask(),
            weighted_sum: 0.0,
            max_guard_pop: 0.0,
        }
    }

    /// `J2` for a step `h` on horizon `T`.
    pub fn leakage(&self, h: f64, horizon: f64) -> f64 {
        h / (2.0 * horizon) * self.weighted_sum
    }
}

impl StageSink for LeakageAccumulator<'_> {
    #[inline]
    fn accept(&mut self, _step: usize, _column: usize, st: &Stages) {
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                acc += w * (st.u1[k] * st.u1[k] + st.u2[k] * st.u2[k] + 2.0 * st.v1[k] * st.v1[k]);
            }
        }
        self.weighted_sum += acc;
        let pop = guard_population(self.guard_mask, &st.u1, &st.v0);
        if pop > self.max_guard_pop {
            self.max_guard_pop = pop;
        }
    }
}

/// Largest supported quadrature order.
pub const MAX_QUADRATURE_ORDER: usize = 64;

/// Gauss-Legendre nodes (ascending) and weights on `[−1, 1]`.
///
/// Nodes are the eigenvalues of the Jacobi matrix of the Legendre
/// recurrence; weights are twice the squared first eigenvector components.
pub fn gauss_legendre(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 || order > MAX_QUADRATURE_ORDER {
        return Err(Error::QuadratureOrder(order));
    }
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.row(0).iter())
        .map(|(&x, &v)| (x, 2.0 * v * v))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Enforce exact symmetry about the origin.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if order % 2 == 1 {
        pairs[order / 2].0 = 0.0;
    }
    Ok(pairs.into_iter().unzip())
}

/// Per-level multipliers of the diagonal noise perturbation for `n` levels:
/// `0` on the ground level and `10^{−(n−1−k)}` on level `k ≥ 1`.
pub fn default_level_scales(levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|k| if k == 0 { 0.0 } else { 10f64.powi(-((levels - 1 - k) as i32)) })
        .collect()
}

/// Uniformly distributed diagonal perturbation `H′(ε) = ε diag(scales)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    eps_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    level_scales: Vec<f64>,
}

impl NoiseModel {
    /// `eps_max` in rad/ns; `level_scales` has one entry per composite level.
    pub fn new(eps_max: f64, order: usize, level_scales: Vec<f64>) -> Result<Self> {
        if !(eps_max.is_finite() && eps_max >= 0.0) {
            return Err(Error::InvalidParameters(format!("eps_max must be >= 0, got {eps_max}")));
        }
        if level_scales.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("noise level scale".into()));
        }
        let (x, w) = gauss_legendre(order)?;
        Ok(Self {
            eps_max,
            nodes: x.iter().map(|x| eps_max * x).collect(),
            // Expectation under the uniform law: weights sum to one.
            weights: w.iter().map(|w| 0.5 * w).collect(),
            level_scales,
        })
    }

    pub fn eps_max(&self) -> f64 {
        self.eps_max
    }

    /// Noise values `ε_k ∈ [−ε_max, ε_max]`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Normalized weights, summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn level_scales(&self) -> &[f64] {
        &self.level_scales
    }

    /// `system` with `ε · scales` added to its diagonal.
    pub fn perturb(&self, system: &CompositeSystem, eps: f64) -> Result<CompositeSystem> {
        let shift: Vec<f64> = self.level_scales.iter().map(|s| eps * s).collect();
        system.with_diagonal_shift(&shift)
    }
}

/// Weighted quadrature of an objective over the noise nodes.
///
/// `eval(ε)` returns the report and gradient at one noise value; nodes run on
/// up to `threads` workers and are reduced in node order.
pub fn risk_neutral_objective<F>(noise: &NoiseModel, threads: usize, eval: F) -> Result<(ObjectiveReport, Vec<f64>)>
where
    F: Fn(f64) -> Result<(ObjectiveReport, Vec<f64>)> + Sync,
{
    if noise.eps_max == 0.0 {
        return eval(0.0);
    }
    let nodes = noise.nodes();
    let threads = threads.clamp(1, nodes.len());
    let results: Vec<Result<(ObjectiveReport, Vec<f64>)>> = if threads == 1 {
        nodes.iter().map(|&e| eval(e)).collect()
    } else {
        let per = nodes.len().div_ceil(threads);
        thread::scope(|s| {
            let handles: Vec<_> = nodes
                .chunks(per)
                .map(|chunk| {
                    let eval = &eval;
                    s.spawn(move || chunk.iter().map(|&e| eval(e)).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("risk worker panicked")).collect()
        })
    };
    let mut grad: Vec<f64> = Vec::new();
    let (mut j1, mut j2, mut ov, mut guard) = (0.0, 0.0, Complex64::new(0.0, 0.0), 0.0_f64);
    for (res, &w) in results.into_iter().zip(noise.weights()) {
        let (rep, g) = res?;
        if grad.is_empty() {
            grad = vec![0.0; g.len()];
        }
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += w * b;
        }
        j1 += w * rep.j1;
        j2 += w * rep.j2;
        ov += rep.overlap * w;
        guard = guard.max(rep.max_guard_pop);
    }
    Ok((ObjectiveReport { j1, j2, total: j1 + j2, overlap: ov, max_guard_pop: guard }, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{GuardWeights, StandardGate};
    use crate::model::SubsystemSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Legendre roots by Newton iteration from Chebyshev-like guesses.
    fn legendre_oracle(n: usize) -> (Vec<f64>, Vec<f64>) {
        let eval = |x: f64| {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 0 {
                return (1.0, 0.0);
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            (p1, dp)
        };
        let mut pts: Vec<(f64, f64)> = (1..=n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
                for _ in 0..100 {
                    let (p, dp) = eval(x);
                    let dx = p / dp;
                    x -= dx;
                    if dx.abs() < 1e-17 {
                        break;
                    }
                }
                let (_, dp) = eval(x);
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.into_iter().unzip()
    }

    #[test]
    fn quadrature_small_orders() {
        let (x, w) = gauss_legendre(1).unwrap();
        assert_eq!((x, w), (vec![0.0], vec![2.0]));
        let (x, w) = gauss_legendre(2).unwrap();
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15 && x[0] == -x[1]);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(65).is_err());
    }

    #[test]
    fn quadrature_matches_newton_oracle() {
        for n in 1..=MAX_QUADRATURE_ORDER {
            let (x, w) = gauss_legendre(n).unwrap();
            let (xo, wo) = legendre_oracle(n);
            for i in 0..n {
                assert!((x[i] - xo[i]).abs() < 1e-12, "node n={n} i={i}");
                assert!((w[i] - wo[i]).abs() < 1e-12, "weight n={n} i={i}");
            }
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_exact_on_monomials() {
        for n in 1..=16 {
            let (x, w) = gauss_legendre(n).unwrap();
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-12, "n={n} p={p}");
            }
        }
    }

    fn problem() -> GateProblem {
        let s = SubsystemSpec::new(3, 2, 0.3, 1.0, 0.3);
        let sys = CompositeSystem::new(vec![s.clone(), s], &[]).unwrap();
        let gate = StandardGate::Cnot { control: 1 }.matrix(&[2, 2]).unwrap();
        GateProblem::new(sys, gate, 5.0, GuardWeights::Uniform(1.0)).unwrap()
    }

    fn target_state(p: &GateProblem) -> RealState {
        let u = (0..4).map(|j| p.target_u(j).to_vec()).collect();
        let v = (0..4).map(|j| p.target_v(j).to_vec()).collect();
        RealState::from_columns(u, v)
    }

    #[test]
    fn perfect_and_phase_shifted_overlap() {
        let p = problem();
        let st = target_state(&p);
        assert!(infidelity(overlap(&p, &st, 0), 4).abs() < 1e-15);
        let ph = Complex64::from_polar(1.0, 0.83);
        let mut rot = st.clone();
        for j in 0..4 {
            for k in 0..9 {
                let z = Complex64::new(st.u[j][k], -st.v[j][k]) * ph;
                rot.u[j][k] = z.re;
                rot.v[j][k] = -z.im;
            }
        }
        assert!(infidelity(overlap(&p, &rot, 0), 4) < 1e-15);
    }

    #[test]
    fn infidelity_matches_complex_frobenius() {
        let p = problem();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = DMatrix::<Complex64>::from_fn(9, 9, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let q = m.qr().q();
            let ut = q.columns(0, 4).into_owned();
            let st = RealState::from_columns(
                (0..4).map(|j| ut.column(j).iter().map(|z| z.re).collect()).collect(),
                (0..4).map(|j| ut.column(j).iter().map(|z| -z.im).collect()).collect(),
            );
            let frob: Complex64 = ut.iter().zip(p.target().rotating.iter()).map(|(a, b)| a.conj() * b).sum();
            let oracle = 1.0 - frob.norm_sqr() / 16.0;
            let s = overlap(&p, &st, 0);
            assert!((infidelity(s, 4) - oracle).abs() < 1e-12);
            assert!(s.norm() <= 4.0 + 1e-12);
        }
    }

    #[test]
    fn leakage_sink() {
        let p = problem();
        let mut acc = LeakageAccumulator::new(&p);
        let mut st = Stages::new(9);
        st.u1[2] = 0.5;
        st.v0[2] = 0.1;
        st.u2[8] = 0.2;
        st.v1[0] = 1.0;
        acc.accept(0, 0, &st);
        assert!((acc.weighted_sum - (0.25 + 0.04)).abs() < 1e-15);
        assert!((acc.max_guard_pop - 0.26).abs() < 1e-15);
        assert!((acc.leakage(0.1, 5.0) - 0.01 * 0.29).abs() < 1e-15);
    }

    #[test]
    fn noise_model_weights() {
        assert_eq!(default_level_scales(4), vec![0.0, 0.01, 0.1, 1.0]);
        let nm = NoiseModel::new(0.3, 9, default_level_scales(4)).unwrap();
        assert!((nm.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for (a, b) in nm.nodes().iter().zip(nm.nodes().iter().rev()) {
            assert_eq!(*a, -*b);
        }
        assert!(nm.nodes().iter().all(|e| e.abs() <= 0.3));
        let quad = |g: fn(f64) -> f64| {
            risk_neutral_objective(&nm, 3, |e| Ok((ObjectiveReport::new(Complex64::new(2.0, 0.0), 2, g(e), 0.0), vec![g(e)])))
                .unwrap()
        };
        let (r, grad) = quad(|e| e * e);
        assert!((r.j2 - 0.09 / 3.0).abs() < 1e-14);
        assert!((grad[0] - 0.09 / 3.0).abs() < 1e-14);
        let (r, _) = quad(|_| 0.7);
        assert!((r.j2 - 0.7).abs() < 1e-14);

        let zero = NoiseModel::new(0.0, 9, default_level_scales(4)).unwrap();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let (r, _) = risk_neutral_objective(&zero, 1, |e| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok((ObjectiveReport::new(Complex64::new(1.0, 0.0), 2, e + 0.5, 0.0), vec![1.0]))
        })
        .unwrap();
        assert_eq!(r.j2, 0.5);
        assert_eq!(calls.into_inner(), 1);
    }

    #[test]
    fn perturbation_shifts_diagonal() {
        let sys = CompositeSystem::new(vec![SubsystemSpec::new(4, 3, 0.0, 0.5, 0.0)], &[]).unwrap();
        let nm = NoiseModel::new(0.1, 3, default_level_scales(4)).unwrap();
        let p = nm.perturb(&sys, 0.2).unwrap();
        for k in 0..4 {
            let d = p.kappa().values()[k] - sys.kappa().values()[k];
            assert!((d - 0.2 * default_level_scales(4)[k]).abs() < 1e-15);
        }
    }
}
