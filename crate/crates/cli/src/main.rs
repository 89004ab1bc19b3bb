// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! `qoc`: optimize, simulate and inspect gate controls for coupled qudits.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid problem or input,
//! 3 optimizer stalled, 4 gradient check failed, 5 non-finite objective.

mod artifacts;
mod commands;
mod config;
mod error;
mod spectrum;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{GradcheckOptions, RunOptions, SweepGrid};

#[derive(Debug, Parser)]
#[command(name = "qoc", version, about = "Gate control synthesis for coupled qudits")]
struct Cli {
    /// Worker threads for columns and quadrature nodes [default: $QOC_THREADS or 1].
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Leave wall time out of report files so repeated runs match byte for byte.
    #[arg(long, global = true)]
    reproducible: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the resonant carrier frequencies of every subsystem in GHz.
    Resonances {
        config: PathBuf,
        /// Include transitions into guard levels.
        #[arg(long)]
        all_levels: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propagate with given parameters and write all artifacts.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Optimize the controls and write all artifacts.
    Optimize {
        config: PathBuf,
        /// Overrides `optimizer.restarts`; restart `r` uses seed `seed + r`.
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fourier magnitude of the lab-frame drive.
    Spectrum {
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the adjoint gradient against central differences.
    Gradcheck {
        config: PathBuf,
        /// Step count override for a quick check.
        #[arg(long)]
        steps: Option<usize>,
        /// Difference step relative to `alpha_max`.
        #[arg(long, default_value_t = 1e-4)]
        fd_step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        abs_floor: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Check at these parameters instead of a random point.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Objective on the perturbed Hamiltonian across a noise grid.
    RiskSweep {
        config: PathBuf,
        #[arg(long = "params", required = true)]
        params: Vec<PathBuf>,
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        eps_min_mhz: f64,
        #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
        eps_max_mhz: f64,
        #[arg(long, default_value_t = 13)]
        eps_count: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// The flag wins over `QOC_THREADS`, which is only read when the flag is absent.
fn thread_count(flag: Option<usize>) -> error::Result<usize> {
    let threads = match (flag, std::env::var("QOC_THREADS")) {
        (Some(n), _) => n,
        (None, Ok(v)) => v
            .trim()
            .parse()
            .map_err(|_| error::CliError::Input(format!("QOC_THREADS must be a positive integer, got `{v}`")))?,
        (None, Err(_)) => 1,
    };
    Ok(threads.max(1))
}

fn run(cli: Cli) -> error::Result<i32> {
    let opts = RunOptions { threads: thread_count(cli.threads)?, reproducible: cli.reproducible };
    match cli.command {
        Command::Resonances { config, all_levels, out } => {
            commands::resonances(&config::load(&config)?, all_levels, out.as_deref())
        }
        Command::Simulate { config, params, out } => commands::simulate(&config::load(&config)?, &params, &out, &opts),
        Command::Optimize { config, restarts, out } => commands::optimize(&config::load(&config)?, restarts, &out, &opts),
        Command::Spectrum { config, params, out } => commands::spectrum(&config::load(&config)?, &params, &out),
        Command::Gradcheck { config, steps, fd_step, tol, abs_floor, seed, params, out } => {
            let gc = GradcheckOptions { steps, fd_step, tol, abs_floor, seed, params };
            commands::gradcheck(&config::load(&config)?, &gc, out.as_deref(), &opts)
        }
        Command::RiskSweep { config, params, eps_min_mhz, eps_max_mhz, eps_count, out } => {
            let grid = SweepGrid { min_mhz: eps_min_mhz, max_mhz: eps_max_mhz, count: eps_count };
            commands::risk_sweep(&config::load(&config)?, &params, &grid, &out, &opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::exit::CONFIG } else { error::exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
