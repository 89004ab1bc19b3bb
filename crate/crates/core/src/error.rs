// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised while building or evaluating a control problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid subsystem: {0}")]
    InvalidSubsystem(String),

    #[error("problem too large: composite dimension {dim} exceeds cap {cap}")]
    ProblemTooLarge { dim: usize, cap: usize },

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("quadrature order {0} out of range 1..=64")]
    QuadratureOrder(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("internal solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
