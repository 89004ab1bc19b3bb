// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Optimal control of gates on coupled superconducting qudits.
//!
//! The rotating-frame Schrödinger equation is integrated with the symplectic
//! Störmer-Verlet scheme, and the discrete objective (gate infidelity plus
//! guard-level leakage) is differentiated exactly by a discrete adjoint
//! sweep. Controls are quadratic B-spline envelopes on carrier waves, and a
//! projected L-BFGS solver handles the amplitude bounds.

pub mod adjoint;
pub mod controls;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod propagator;

pub use adjoint::{evaluate, gradient, GradientOptions, TrajectoryMode};
pub use controls::{ControlParameterization, ParameterVector};
pub use error::{Error, Result};
pub use gates::{GateProblem, GuardWeights, StandardGate};
pub use model::{CompositeSystem, SubsystemSpec};
pub use objective::{NoiseModel, ObjectiveReport};
pub use optimizer::{minimize, OptimizerConfig, Status};
pub use propagator::{estimate_steps, RateBound, TimeGrid};
