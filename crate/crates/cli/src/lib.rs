//! Command-line front end: simulation runs, sweeps, baseline comparison,
//! analysis checks and the regularization study.
//!
//! Exit codes: 0 success, 1 the domain check failed, 2 bad usage or config.

pub mod args;
pub mod commands;
pub mod plot;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safeflow::analysis::RegularizationForm;

use crate::args::{RunConfig, ScalarKind, UsageError};
use crate::commands::Outcome;

#[derive(Debug, Parser)]
#[command(
    name = "safeflow",
    version,
    about = "Safe feedback optimization with high-order control barrier functions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the closed loop from one initial condition.
    Simulate {
        #[command(flatten)]
        run: RunConfig,
    },
    /// Search for a start where the input-only controller violates the state
    /// constraint but the barrier controller does not.
    Compare {
        #[command(flatten)]
        run: RunConfig,
        /// Number of ring candidates (ignored with --x0).
        #[arg(long, default_value_t = 16)]
        candidates: usize,
        /// Level of h on which the candidates lie.
        #[arg(
            long = "ring-level",
            default_value_t = 0.05,
            allow_negative_numbers = true
        )]
        ring_level: f64,
    },
    /// Run many initial conditions and tabulate convergence and safety.
    Sweep {
        #[command(flatten)]
        run: RunConfig,
        /// Size of the interior grid (ignored with --x0).
        #[arg(long, default_value_t = 12)]
        points: usize,
    },
    /// Relative degree, QP feasibility, KKT and equilibrium diagnostics.
    Check {
        #[command(flatten)]
        run: RunConfig,
        /// Boundary samples for the relative-degree and certificate checks.
        #[arg(long, default_value_t = safeflow::hocbf::DEFAULT_BOUNDARY_SAMPLES)]
        samples: usize,
    },
    /// Sweep the interior regularization over (p, eps).
    Regularize {
        #[command(flatten)]
        run: RunConfig,
        /// Accepted objective loss.
        #[arg(long, default_value_t = safeflow::analysis::regularize::DEFAULT_DELTA, allow_negative_numbers = true)]
        delta: f64,
        /// shifted: p (eps - h)^2, printed: p (eps - h^2).
        #[arg(long, default_value = "shifted")]
        form: String,
    },
}

macro_rules! dispatch {
    ($run:expr, $f:ident $(, $arg:expr)*) => {
        match $run.scalar {
            ScalarKind::F64 => commands::$f::<f64>($run $(, $arg)*),
            ScalarKind::F32 => commands::$f::<f32>($run $(, $arg)*),
        }
    };
}

pub fn execute(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Simulate { run } => dispatch!(run, simulate),
        Command::Compare {
            run,
            candidates,
            ring_level,
        } => dispatch!(run, compare, *candidates, *ring_level),
        Command::Sweep { run, points } => dispatch!(run, sweep_cmd, *points),
        Command::Check { run, samples } => dispatch!(run, check, *samples),
        Command::Regularize { run, delta, form } => {
            let form: RegularizationForm = form
                .parse()
                .map_err(|e: String| args::usage(format!("--form: {e}")))?;
            dispatch!(run, regularize_cmd, *delta, form)
        }
    }
}

/// Runs a parsed command and maps the result onto the exit-code contract.
pub fn run(cli: &Cli) -> ExitCode {
    match execute(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Failure) => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
