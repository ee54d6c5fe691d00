//! Command-line experiment runner for the `fracobstacle` solvers.
//!
//! Every subcommand reads one JSON config, writes its outputs into a
//! directory together with the resolved config, and reports failures as a
//! one-line JSON record on stderr. Exit codes: 0 success, 1 invalid input,
//! 2 solver failure, 3 oracle failure.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::Config;
pub use error::CliError;

use crate::commands::Context;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "fracobstacle", version, about = "Penalized and complementarity solvers for fractional parabolic obstacle problems")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Seed for every randomized choice (sampled points and pairs).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Penalized solve (an epsilon continuation when `penalty.levels` > 1).
    Solve,
    /// Complementarity solve with projected SOR.
    Oracle,
    /// Epsilon continuation measured against the complementarity solution.
    Compare,
    /// Density, local energy and modulus diagnostics of the free boundary.
    Regularity {
        /// Field to analyse (`.bin` with its `.json` sidecar); solved from the config when absent.
        #[arg(long)]
        field: Option<PathBuf>,
        /// JSON list of points, each `{"node", "slice"}` or `{"x", "t"}`.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Energy inequality and dyadic level energies.
    Energy {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Kernel bounds, heat-kernel scaling and envelope checks.
    Kernelcheck,
    /// Penalized and complementarity solves over a parameter grid.
    Sweep,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Oracle => "oracle",
            Command::Compare => "compare",
            Command::Regularity { .. } => "regularity",
            Command::Energy { .. } => "energy",
            Command::Kernelcheck => "kernelcheck",
            Command::Sweep => "sweep",
        }
    }
}

fn report(err: &CliError) -> i32 {
    log::error!("{err}");
    eprintln!("{}", err.diagnostic());
    err.exit_code()
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            let message = e.kind().to_string();
            return report(&CliError::Validation { message, key: None });
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            log::info!("{} finished: {summary}", cli.command.name());
            0
        }
        Err(e) => report(&e),
    }
}

/// Runs a parsed command and returns its JSON summary.
pub fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation {
        message: "--config is required".into(),
        key: None,
    })?;
    let mut config = Config::load(path)?;
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if cli.workers == 0 {
        return Err(CliError::Validation {
            message: "--workers must be at least 1".into(),
            key: None,
        });
    }
    let mut out = OutDir::create(&config.output.dir)?;
    out.json("resolved_config.json", &config)?;
    let ctx = Context {
        config,
        workers: cli.workers,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Solve => commands::solve(&ctx, &mut out),
        Command::Oracle => commands::oracle(&ctx, &mut out),
        Command::Compare => commands::compare(&ctx, &mut out),
        Command::Regularity { field, points } => commands::regularity(&ctx, &mut out, field.as_deref(), points.as_deref()),
        Command::Energy { field } => commands::energy(&ctx, &mut out, field.as_deref()),
        Command::Kernelcheck => commands::kernelcheck(&ctx, &mut out),
        Command::Sweep => commands::sweep(&ctx, &mut out),
    }
}
