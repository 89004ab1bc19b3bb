// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const STALLED: i32 = 3;
    pub const GRADCHECK: i32 = 4;
    pub const NON_FINITE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] qoc_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use qoc_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Input(_) => exit::CONFIG,
            CliError::Core(
                E::InvalidSubsystem(_)
                | E::ProblemTooLarge { .. }
                | E::InvalidGate(_)
                | E::InvalidParameters(_)
                | E::InvalidGrid(_)
                | E::QuadratureOrder(_),
            ) => exit::CONFIG,
            CliError::Core(E::NonFinite(_)) => exit::NON_FINITE,
            _ => exit::RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
