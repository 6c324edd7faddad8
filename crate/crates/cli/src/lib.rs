//! Command-line driver: annuity premium tables, policy solves, Monte Carlo
//! validation and age sweeps.
//!
//! [`run`] is the whole program minus process exit, so it can be driven
//! in-process by tests.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hjbvi_core::policy::ExportFormat;
use hjbvi_core::Error;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hjbvi", version, about = "Habit-formation annuitization solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalized premium ratios of subjective versus objective annuity prices.
    NprTable {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the variational inequality and export the policy.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: ExportFormat,
    },
    /// Simulate a policy and estimate its discounted objective.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Policy file written by `solve`; solved inline when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Also run the constant-Merton, no-labor benchmark on the same noise.
        #[arg(long)]
        benchmark: bool,
        /// Write per-step traces of the first `simulation.trace_paths` paths here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve across ages and write a long-format policy surface.
    Surface {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("solves failed at ages {ages:?}: {detail}")]
    PartialSurface { ages: Vec<f64>, detail: String },
}

impl CliError {
    /// 2 configuration or I/O, 3 numerical failure, 4 grid or domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                Error::ConfigError(_) | Error::Io(_) => 2,
                Error::GridTooSmall(_) | Error::DomainError(_) => 4,
                Error::NumericalFailure(_)
                | Error::InvalidIntegrand { .. }
                | Error::BracketError { .. }
                | Error::NonConcave { .. }
                | Error::DegenerateMarginalValue { .. }
                | Error::NoConvergence { .. } => 3,
            },
            CliError::PartialSurface { .. } => 3,
        }
    }
}

/// Parse `args` (including the program name), run the command, and return
/// the process exit code. Reports go to `stdout`, errors to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let CliError::Core(Error::GridTooSmall(_)) = e {
                let _ = writeln!(stderr, "hint: raise grid.y_max");
            }
            e.exit_code()
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.simulation.seed = seed;
    }
    Ok(config)
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::NprTable { common } => commands::npr_table(&load(common)?, common.out.as_deref(), out),
        Command::Solve { common, format } => {
            commands::solve(&load(common)?, common.out.as_deref(), *format, out)
        }
        Command::Simulate {
            common,
            policy,
            benchmark,
            trace,
        } => commands::simulate(
            &load(common)?,
            &commands::SimulateOptions {
                policy: policy.as_deref(),
                benchmark: *benchmark,
                trace: trace.as_deref(),
                out: common.out.as_deref(),
            },
            out,
        ),
        Command::Surface { common } => commands::surface(&load(common)?, common.out.as_deref(), out),
    }
}
