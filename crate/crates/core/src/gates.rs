// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Essential and guard levels, target lifting and standard gates.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::CompositeSystem;

const UNITARITY_TOL: f64 = 1e-12;

/// Map between essential columns and full-space levels.
///
/// Essential column `ℓ = i_1 + m_1 i_2 + ...` lifts to the composite level
/// with the same occupations.
#[derive(Debug, Clone, PartialEq)]
pub struct EssentialMap {
    lift: Vec<usize>,
    guard_mask: Vec<bool>,
}

impl EssentialMap {
    pub fn new(system: &CompositeSystem) -> Self {
        let specs = system.subsystems();
        let lift = (0..system.essential_dim())
            .map(|l| {
                let mut rest = l;
                let occ: Vec<usize> = specs
                    .iter()
                    .map(|s| {
                        let i = rest % s.essential;
                        rest /= s.essential;
                        i
                    })
                    .collect();
                system.level_index(&occ)
            })
            .collect();
        let guard_mask = (0..system.total_dim())
            .map(|k| system.multi_index(k).iter().zip(specs).any(|(j, s)| *j >= s.essential))
            .collect();
        Self { lift, guard_mask }
    }

    /// Full-space level of essential column `l`.
    pub fn lift(&self, l: usize) -> usize {
        self.lift[l]
    }

    pub fn lifts(&self) -> &[usize] {
        &self.lift
    }

    /// `true` on guard levels.
    pub fn guard_mask(&self) -> &[bool] {
        &self.guard_mask
    }

    /// Dense `N×E` selection matrix `U₀`.
    pub fn initial_basis(&self) -> DMatrix<f64> {
        let mut u0 = DMatrix::zeros(self.guard_mask.len(), self.lift.len());
        for (l, &k) in self.lift.iter().enumerate() {
            u0[(k, l)] = 1.0;
        }
        u0
    }
}

/// Lifted target in the lab frame and in the rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTarget {
    pub lab: DMatrix<Complex64>,
    pub rotating: DMatrix<Complex64>,
}

/// Whether `m` is unitary to `1e-12` in the max norm.
pub fn is_unitary(m: &DMatrix<Complex64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let prod = m.adjoint() * m;
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| (prod[(i, j)] - if i == j { 1.0 } else { 0.0 }).norm() <= UNITARITY_TOL))
}

/// `V_tg = U₀ V_E` and `V_tg^{rw} = R(T) V_tg`.
pub fn lift_and_rotate_target(gate: &DMatrix<Complex64>, system: &CompositeSystem, horizon: f64) -> Result<LiftedTarget> {
    let e = system.essential_dim();
    if gate.nrows() != e || gate.ncols() != e {
        return Err(Error::InvalidGate(format!(
            "gate is {}x{}, essential dimension is {e}",
            gate.nrows(),
            gate.ncols()
        )));
    }
    if !is_unitary(gate) {
        return Err(Error::InvalidGate("gate matrix is not unitary".into()));
    }
    let map = EssentialMap::new(system);
    let n = system.total_dim();
    let mut lab = DMatrix::zeros(n, e);
    for (l, &k) in map.lifts().iter().enumerate() {
        lab.row_mut(k).copy_from(&gate.row(l));
    }
    let phases = system.rotation_phases(horizon);
    let mut rotating = lab.clone();
    for (mut row, ph) in rotating.row_iter_mut().zip(&phases) {
        row *= *ph;
    }
    Ok(LiftedTarget { lab, rotating })
}

/// Built-in target gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardGate {
    /// Controlled NOT on two qubits; `control` is the zero-based controlling subsystem.
    Cnot { control: usize },
    /// Exchange of essential columns 0 and `d`.
    Swap0d(usize),
    Identity,
}

impl StandardGate {
    /// Gate matrix for the given essential dimensions.
    pub fn matrix(self, essential: &[usize]) -> Result<DMatrix<Complex64>> {
        let e: usize = essential.iter().product();
        let mut perm: Vec<usize> = (0..e).collect();
        match self {
            StandardGate::Identity => {}
            StandardGate::Swap0d(d) => {
                if d == 0 || d >= e {
                    return Err(Error::InvalidGate(format!("swap 0<->{d} needs 1 <= d < E = {e}")));
                }
                perm.swap(0, d);
            }
            StandardGate::Cnot { control } => {
                if essential != [2, 2] || control > 1 {
                    return Err(Error::InvalidGate(format!(
                        "cnot needs two subsystems with 2 essential levels each and control in {{0, 1}}, got {essential:?}"
                    )));
                }
                // ℓ = i_1 + 2 i_2; flip the target bit where the control bit is set.
                let ctrl_bit = 1 << control;
                let tgt_bit = 1 << (1 - control);
                for (l, p) in perm.iter_mut().enumerate() {
                    if l & ctrl_bit != 0 {
                        *p = l ^ tgt_bit;
                    }
                }
            }
        }
        let mut m = DMatrix::zeros(e, e);
        for (col, &row) in perm.iter().enumerate() {
            m[(row, col)] = Complex64::new(1.0, 0.0);
        }
        Ok(m)
    }
}

/// Guard-level weighting for the leakage penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum GuardWeights {
    /// Same weight on every guard level.
    Uniform(f64),
    /// One weight per composite level; must vanish on essential levels.
    PerLevel(Vec<f64>),
}

/// Everything the objective needs about the target.
#[derive(Debug, Clone, PartialEq)]
pub struct GateProblem {
    system: CompositeSystem,
    map: EssentialMap,
    gate: DMatrix<Complex64>,
    target: LiftedTarget,
    target_u: Vec<Vec<f64>>,
    target_v: Vec<Vec<f64>>,
    weights: Vec<f64>,
    horizon: f64,
}

impl GateProblem {
    pub fn new(system: CompositeSystem, gate: DMatrix<Complex64>, horizon: f64, guard: GuardWeights) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGate(format!("horizon must be positive, got {horizon}")));
        }
        let target = lift_and_rotate_target(&gate, &system, horizon)?;
        let map = EssentialMap::new(&system);
        let weights = match guard {
            GuardWeights::Uniform(w) => {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidGate(format!("guard weight must be >= 0, got {w}")));
                }
                map.guard_mask().iter().map(|&g| if g { w } else { 0.0 }).collect()
            }
            GuardWeights::PerLevel(w) => {
                if w.len() != system.total_dim() {
                    return Err(Error::InvalidGate(format!(
                        "{} guard weights given for {} levels",
                        w.len(),
                        system.total_dim()
                    )));
                }
                for (k, (&wk, &g)) in w.iter().zip(map.guard_mask()).enumerate() {
                    if !(wk.is_finite() && wk >= 0.0) || (!g && wk != 0.0) {
                        return Err(Error::InvalidGate(format!("invalid guard weight {wk} at level {k}")));
                    }
                }
                w
            }
        };
        let (target_u, target_v) = target
            .rotating
            .column_iter()
            .map(|c| (c.iter().map(|z| z.re).collect(), c.iter().map(|z| -z.im).collect()))
            .unzip();
        Ok(Self { system, map, gate, target, target_u, target_v, weights, horizon })
    }

    /// Same gate on a different system with identical rotating frame.
    pub fn with_system(&self, system: CompositeSystem) -> Result<Self> {
        Self::new(system, self.gate.clone(), self.horizon, GuardWeights::PerLevel(self.weights.clone()))
    }

    pub fn system(&self) -> &CompositeSystem {
        &self.system
    }

    pub fn essential_map(&self) -> &EssentialMap {
        &self.map
    }

    pub fn gate(&self) -> &DMatrix<Complex64> {
        &self.gate
    }

    pub fn target(&self) -> &LiftedTarget {
        &self.target
    }

    /// Real part of rotating-frame target column `j`.
    pub fn target_u(&self, j: usize) -> &[f64] {
        &self.target_u[j]
    }

    /// Negated imaginary part of rotating-frame target column `j`.
    pub fn target_v(&self, j: usize) -> &[f64] {
        &self.target_v[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_columns(&self) -> usize {
        self.map.lifts().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SubsystemSpec;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn two_qutrits(rot: f64) -> CompositeSystem {
        let s = SubsystemSpec::new(3, 2, rot, 1.0, rot);
        CompositeSystem::new(vec![s.clone(), SubsystemSpec { rot_freq: 2.0 * rot, ..s }], &[]).unwrap()
    }

    #[test]
    fn initial_basis_selection() {
        let one = CompositeSystem::new(vec![SubsystemSpec::new(3, 2, 0.0, 0.0, 0.0)], &[]).unwrap();
        let u0 = EssentialMap::new(&one).initial_basis();
        assert_eq!(u0, DMatrix::<f64>::identity(3, 3).columns(0, 2));
        let map = EssentialMap::new(&two_qutrits(0.0));
        assert_eq!(map.lifts(), &[0, 1, 3, 4]);
        let u0 = map.initial_basis();
        assert_eq!(u0.transpose() * &u0, DMatrix::identity(4, 4));
        assert_eq!(map.guard_mask().iter().filter(|g| **g).count(), 9 - 4);
    }

    #[test]
    fn standard_gates() {
        let id = StandardGate::Identity.matrix(&[2, 2]).unwrap();
        assert_eq!(id, DMatrix::identity(4, 4));
        let cx = StandardGate::Cnot { control: 1 }.matrix(&[2, 2]).unwrap();
        assert!(is_unitary(&cx));
        assert_eq!(&cx * &cx, id);
        assert_eq!(cx[(3, 2)], c(1.0));
        assert_eq!(cx[(2, 3)], c(1.0));
        assert_eq!(cx[(1, 1)], c(1.0));
        let cx0 = StandardGate::Cnot { control: 0 }.matrix(&[2, 2]).unwrap();
        assert_eq!(cx0[(3, 1)], c(1.0));
        assert_eq!(cx0[(2, 2)], c(1.0));
        assert!(StandardGate::Cnot { control: 0 }.matrix(&[3, 2]).is_err());
        let sw = StandardGate::Swap0d(3).matrix(&[4]).unwrap();
        assert_eq!(sw[(3, 0)], c(1.0));
        assert_eq!(sw[(0, 3)], c(1.0));
        assert_eq!(sw[(1, 1)], c(1.0));
        assert!(StandardGate::Swap0d(4).matrix(&[4]).is_err());
    }

    #[test]
    fn lifting_and_rotation() {
        let sys = two_qutrits(0.0);
        let id = StandardGate::Identity.matrix(&[2, 2]).unwrap();
        let t = lift_and_rotate_target(&id, &sys, 10.0).unwrap();
        assert_eq!(t.rotating.map(|z| z.re), EssentialMap::new(&sys).initial_basis());

        let sys = two_qutrits(0.7);
        let cx = StandardGate::Cnot { control: 1 }.matrix(&[2, 2]).unwrap();
        let t = lift_and_rotate_target(&cx, &sys, 3.3).unwrap();
        for col in t.rotating.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-15);
        }
        let ph = sys.rotation_phases(3.3);
        assert!((t.rotating[(4, 2)] - ph[4]).norm() < 1e-15);

        let mut bad = id.clone();
        bad[(0, 0)] = c(1.1);
        assert!(matches!(lift_and_rotate_target(&bad, &sys, 1.0), Err(Error::InvalidGate(_))));
    }

    #[test]
    fn guard_weights() {
        let sys = two_qutrits(0.0);
        let gate = StandardGate::Identity.matrix(&[2, 2]).unwrap();
        let p = GateProblem::new(sys.clone(), gate.clone(), 5.0, GuardWeights::Uniform(2.0)).unwrap();
        for (w, g) in p.weights().iter().zip(p.essential_map().guard_mask()) {
            assert_eq!(*w, if *g { 2.0 } else { 0.0 });
        }
        let mut bad = vec![0.0; 9];
        bad[0] = 1.0;
        assert!(GateProblem::new(sys, gate, 5.0, GuardWeights::PerLevel(bad)).is_err());
    }
}
