// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Composite-qudit Hamiltonians in the rotating frame.
//!
//! A composite system is an ordered list of qudits. Composite levels are
//! flattened little-endian: `k = j_1 + n_1 j_2 + n_1 n_2 j_3 + ...`, so
//! subsystem 1 varies fastest. All frequencies are angular, in rad/ns.
//!
//! The rotating-frame Hamiltonian is `H(t) = diag(κ) + Σ_q (d_q a_q + d̄_q a_qᵀ)`.
//! Its real part is `K = diag(κ) + Σ_q Re(d_q) (a_q + a_qᵀ)` and its imaginary
//! part is `S = Σ_q Im(d_q) (a_q − a_qᵀ)`. Both are applied sparsely through
//! the lowering-operator entries; dense copies are only built on request.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default cap on the composite dimension `N`.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Default tolerance (rad/ns) for merging nearly equal resonance frequencies.
pub const RESONANCE_MERGE_TOL: f64 = 1e-12;

/// One qudit of a composite system.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemSpec {
    /// Number of modeled levels `n_q`.
    pub levels: usize,
    /// Number of essential levels `m_q`, `1 ≤ m_q ≤ n_q`.
    pub essential: usize,
    /// Ground state transition frequency `ω_q`.
    pub ground_freq: f64,
    /// Self-Kerr coefficient `ξ_q`.
    pub self_kerr: f64,
    /// Frequency of the rotating frame `ω_{r,q}`.
    pub rot_freq: f64,
}

impl SubsystemSpec {
    pub fn new(levels: usize, essential: usize, ground_freq: f64, self_kerr: f64, rot_freq: f64) -> Self {
        Self { levels, essential, ground_freq, self_kerr, rot_freq }
    }

    /// Detuning `Δ_q = ω_q − ω_{r,q}`.
    pub fn detuning(&self) -> f64 {
        self.ground_freq - self.rot_freq
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidSubsystem(format!(
                "subsystem {} has {} levels, need at least 2",
                q + 1,
                self.levels
            )));
        }
        if self.essential < 1 || self.essential > self.levels {
            return Err(Error::InvalidSubsystem(format!(
                "subsystem {} has {} essential levels, need 1..={}",
                q + 1,
                self.essential,
                self.levels
            )));
        }
        let finite = [self.ground_freq, self.self_kerr, self.rot_freq]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidSubsystem(format!("subsystem {} has non-finite frequencies", q + 1)));
        }
        Ok(())
    }
}

/// Single-system lowering matrix `A` with `√1 .. √(n−1)` on the superdiagonal.
pub fn build_lowering(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidSubsystem(format!("lowering matrix needs n >= 2, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        a[(k, k + 1)] = ((k + 1) as f64).sqrt();
    }
    Ok(a)
}

/// Sparse lowering operator `a_q` of the composite system.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweringOperator {
    /// Nonzero entries `(row, col, value)`; `row = col − stride_q`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl LoweringOperator {
    /// `y += c · (a + aᵀ) x`
    #[inline]
    pub fn sym_apply_add(&self, c: f64, x: &[f64], y: &mut [f64]) {
        for &(r, col, v) in &self.entries {
            let cv = c * v;
            y[r] += cv * x[col];
            y[col] += cv * x[r];
        }
    }

    /// `y += c · (a − aᵀ) x`
    #[inline]
    pub fn asym_apply_add(&self, c: f64, x: &[f64], y: &mut [f64]) {
        for &(r, col, v) in &self.entries {
            let cv = c * v;
            y[r] += cv * x[col];
            y[col] -= cv * x[r];
        }
    }

    /// `⟨y, (a + aᵀ) x⟩`
    #[inline]
    pub fn sym_form(&self, y: &[f64], x: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| v * (y[r] * x[c] + y[c] * x[r]))
            .sum()
    }

    /// `⟨y, (a − aᵀ) x⟩`
    #[inline]
    pub fn asym_form(&self, y: &[f64], x: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| v * (y[r] * x[c] - y[c] * x[r]))
            .sum()
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }
}

/// Lowering operators of every subsystem plus the derived sym/asym/number forms.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    dim: usize,
    lowering: Vec<LoweringOperator>,
    numbers: Vec<Vec<f64>>,
}

impl OperatorSet {
    pub fn lowering(&self, q: usize) -> &LoweringOperator {
        &self.lowering[q]
    }

    pub fn len(&self) -> usize {
        self.lowering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowering.is_empty()
    }

    /// Dense `a_q + a_qᵀ`.
    pub fn sym(&self, q: usize) -> DMatrix<f64> {
        let a = self.lowering[q].to_dense(self.dim);
        &a + a.transpose()
    }

    /// Dense `a_q − a_qᵀ`.
    pub fn asym(&self, q: usize) -> DMatrix<f64> {
        let a = self.lowering[q].to_dense(self.dim);
        &a - a.transpose()
    }

    /// Diagonal of the number operator `a_qᵀ a_q`.
    pub fn number(&self, q: usize) -> &[f64] {
        &self.numbers[q]
    }
}

/// Diagonal of the rotating-frame system Hamiltonian, one value per composite level.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingDiagonal(pub Vec<f64>);

impl RotatingDiagonal {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// A composite qudit system with its operators and rotating-frame diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSystem {
    subsystems: Vec<SubsystemSpec>,
    cross_kerr: Vec<f64>,
    strides: Vec<usize>,
    total_dim: usize,
    essential_dim: usize,
    ops: OperatorSet,
    kappa: RotatingDiagonal,
}

impl CompositeSystem {
    /// Build with the default dimension cap. `cross_kerr` is a full `Q×Q`
    /// symmetric table (an empty table means no cross-Kerr coupling).
    pub fn new(specs: Vec<SubsystemSpec>, cross_kerr: &[Vec<f64>]) -> Result<Self> {
        Self::with_cap(specs, cross_kerr, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(specs: Vec<SubsystemSpec>, cross_kerr: &[Vec<f64>], cap: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidSubsystem("no subsystems given".into()));
        }
        for (q, s) in specs.iter().enumerate() {
            s.validate(q)?;
        }
        let nq = specs.len();
        let mut table = vec![0.0; nq * nq];
        if !cross_kerr.is_empty() {
            if cross_kerr.len() != nq || cross_kerr.iter().any(|r| r.len() != nq) {
                return Err(Error::InvalidSubsystem(format!("cross-Kerr table must be {nq}x{nq}")));
            }
            for p in 0..nq {
                for q in 0..nq {
                    let (a, b) = (cross_kerr[p][q], cross_kerr[q][p]);
                    if !a.is_finite() || (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                        return Err(Error::InvalidSubsystem(format!(
                            "cross-Kerr table is not symmetric at ({}, {})",
                            p + 1,
                            q + 1
                        )));
                    }
                    table[p * nq + q] = a;
                }
            }
        }

        let mut strides = Vec::with_capacity(nq);
        let mut total: usize = 1;
        for s in &specs {
            strides.push(total);
            total = total
                .checked_mul(s.levels)
                .filter(|&t| t <= cap)
                .ok_or(Error::ProblemTooLarge { dim: total.saturating_mul(s.levels), cap })?;
        }
        let essential_dim = specs.iter().map(|s| s.essential).product();

        let mut lowering = Vec::with_capacity(nq);
        let mut numbers = Vec::with_capacity(nq);
        for (q, s) in specs.iter().enumerate() {
            let stride = strides[q];
            let mut entries = Vec::new();
            let mut number = vec![0.0; total];
            for (k, nk) in number.iter_mut().enumerate() {
                let j = (k / stride) % s.levels;
                *nk = j as f64;
                if j >= 1 {
                    entries.push((k - stride, k, (j as f64).sqrt()));
                }
            }
            lowering.push(LoweringOperator { entries });
            numbers.push(number);
        }

        let mut sys = Self {
            subsystems: specs,
            cross_kerr: table,
            strides,
            total_dim: total,
            essential_dim,
            ops: OperatorSet { dim: total, lowering, numbers },
            kappa: RotatingDiagonal(Vec::new()),
        };
        let kappa = (0..total).map(|k| sys.kappa_of(&sys.multi_index(k))).collect();
        sys.kappa = RotatingDiagonal(kappa);
        Ok(sys)
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn num_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    /// Cross-Kerr coefficient `ξ_pq` (zero-based, symmetric).
    pub fn cross_kerr(&self, p: usize, q: usize) -> f64 {
        self.cross_kerr[p * self.subsystems.len() + q]
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn essential_dim(&self) -> usize {
        self.essential_dim
    }

    pub fn guard_dim(&self) -> usize {
        self.total_dim - self.essential_dim
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn kappa(&self) -> &RotatingDiagonal {
        &self.kappa
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Occupation numbers `(j_1, .., j_Q)` of composite level `k`.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        self.subsystems
            .iter()
            .zip(&self.strides)
            .map(|(s, &st)| (k / st) % s.levels)
            .collect()
    }

    /// Composite level of the occupation numbers `(j_1, .., j_Q)`.
    pub fn level_index(&self, j: &[usize]) -> usize {
        j.iter().zip(&self.strides).map(|(a, b)| a * b).sum()
    }

    /// `κ_j = Σ_q (Δ_q j_q − ξ_q/2 j_q(j_q−1)) − Σ_{p>q} ξ_pq j_p j_q`
    pub fn kappa_of(&self, j: &[usize]) -> f64 {
        let nq = self.subsystems.len();
        let mut acc = 0.0;
        for (q, s) in self.subsystems.iter().enumerate() {
            let jq = j[q] as f64;
            acc += s.detuning() * jq - 0.5 * s.self_kerr * jq * (jq - 1.0);
            for p in q + 1..nq {
                acc -= self.cross_kerr(p, q) * j[p] as f64 * jq;
            }
        }
        acc
    }

    /// Copy of the system whose diagonal is shifted by `shift` (one entry per level).
    pub fn with_diagonal_shift(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.total_dim {
            return Err(Error::InvalidSubsystem(format!(
                "diagonal shift has {} entries, system has {} levels",
                shift.len(),
                self.total_dim
            )));
        }
        let mut out = self.clone();
        for (k, s) in out.kappa.0.iter_mut().zip(shift) {
            *k += s;
        }
        Ok(out)
    }

    /// `y += scale · K x` for envelope real parts `re` (one per subsystem).
    #[inline]
    pub fn apply_k_add(&self, re: &[f64], scale: f64, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), ki) in y.iter_mut().zip(x).zip(&self.kappa.0) {
            *yi += scale * ki * xi;
        }
        for (op, &c) in self.ops.lowering.iter().zip(re) {
            if c != 0.0 {
                op.sym_apply_add(scale * c, x, y);
            }
        }
    }

    /// `y += scale · S x` for envelope imaginary parts `im` (one per subsystem).
    #[inline]
    pub fn apply_s_add(&self, im: &[f64], scale: f64, x: &[f64], y: &mut [f64]) {
        for (op, &c) in self.ops.lowering.iter().zip(im) {
            if c != 0.0 {
                op.asym_apply_add(scale * c, x, y);
            }
        }
    }

    /// Write `I + scale · S` into the row-major buffer `out`.
    pub fn fill_identity_plus_s(&self, im: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.total_dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            out[i * n + i] = 1.0;
        }
        for (op, &c) in self.ops.lowering.iter().zip(im) {
            let c = c * scale;
            if c == 0.0 {
                continue;
            }
            for &(r, col, v) in &op.entries {
                out[r * n + col] += c * v;
                out[col * n + r] -= c * v;
            }
        }
    }

    /// Dense real and imaginary parts of the rotating-frame Hamiltonian.
    ///
    /// `envelopes[q] = (Re d_q, Im d_q)`. Results are written into `k` and `s`,
    /// which must be `N×N`.
    pub fn assemble_real_parts(
        &self,
        envelopes: &[(f64, f64)],
        k: &mut DMatrix<f64>,
        s: &mut DMatrix<f64>,
    ) -> Result<()> {
        if envelopes.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::NonFinite("envelope value".into()));
        }
        k.fill(0.0);
        s.fill(0.0);
        for (i, v) in self.kappa.0.iter().enumerate() {
            k[(i, i)] = *v;
        }
        for (op, &(re, im)) in self.ops.lowering.iter().zip(envelopes) {
            for &(r, c, v) in &op.entries {
                k[(r, c)] += re * v;
                k[(c, r)] += re * v;
                s[(r, c)] += im * v;
                s[(c, r)] -= im * v;
            }
        }
        Ok(())
    }

    /// Carrier frequencies that drive resonant transitions in subsystem `k`.
    ///
    /// Returns `Δ_k − ξ_k j_k − Σ_{p≠k} ξ_kp j_p` for every transition
    /// `j → j + e_k`, sorted descending with near-duplicates merged. With
    /// `essential_only`, both ends of the transition must be essential levels.
    pub fn resonance_frequencies(&self, k: usize, essential_only: bool, merge_tol: f64) -> Vec<f64> {
        let spec = &self.subsystems[k];
        let mut out = Vec::new();
        for level in 0..self.total_dim {
            let j = self.multi_index(level);
            let upper = if essential_only { spec.essential } else { spec.levels };
            if j[k] + 1 >= upper {
                continue;
            }
            if essential_only && j.iter().zip(&self.subsystems).any(|(jq, s)| *jq >= s.essential) {
                continue;
            }
            let mut up = j.clone();
            up[k] += 1;
            out.push(self.kappa_of(&up) - self.kappa_of(&j));
        }
        out.sort_by(|a, b| b.partial_cmp(a).unwrap());
        out.dedup_by(|a, b| (*a - *b).abs() <= merge_tol);
        out
    }

    /// Gershgorin bound on the spectral radius for envelope bounds `d_inf`.
    ///
    /// `max_j |κ_j| + Σ_q 2 d_inf_q · rowsum_j |a_q + a_qᵀ|`.
    pub fn gershgorin_bound(&self, d_inf: &[f64]) -> f64 {
        let mut rowsum = vec![vec![0.0; self.total_dim]; self.subsystems.len()];
        for (q, op) in self.ops.lowering.iter().enumerate() {
            for &(r, c, v) in &op.entries {
                rowsum[q][r] += v.abs();
                rowsum[q][c] += v.abs();
            }
        }
        (0..self.total_dim)
            .map(|j| {
                self.kappa.0[j].abs()
                    + d_inf
                        .iter()
                        .zip(&rowsum)
                        .map(|(d, rs)| 2.0 * d.abs() * rs[j])
                        .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Spectral radius of the Hamiltonian frozen at envelope amplitudes `d_inf`.
    ///
    /// The spectrum of `diag(κ) + Σ_q (d_q a_q + d̄_q a_qᵀ)` only depends on
    /// `|d_q|`, so the frozen matrix is taken real and solved densely.
    pub fn frozen_spectral_radius(&self, d_inf: &[f64]) -> f64 {
        let n = self.total_dim;
        let mut h = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_column_slice(&self.kappa.0));
        for (op, &d) in self.ops.lowering.iter().zip(d_inf) {
            for &(r, c, v) in &op.entries {
                h[(r, c)] += d * v;
                h[(c, r)] += d * v;
            }
        }
        if n == 1 {
            return h[(0, 0)].abs();
        }
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Diagonal of the rotating-frame transformation `R(t)`.
    pub fn rotation_phases(&self, t: f64) -> Vec<Complex64> {
        (0..self.total_dim)
            .map(|k| {
                let phase: f64 = self
                    .multi_index(k)
                    .iter()
                    .zip(&self.subsystems)
                    .map(|(j, s)| s.rot_freq * *j as f64)
                    .sum();
                Complex64::from_polar(1.0, phase * t)
            })
            .collect()
    }
}
