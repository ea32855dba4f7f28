//! Command-line front end of `obstacle-mg`.
//!
//! Exit codes: 0 success, 1 configuration or layout error, 2 numerical
//! failure, `2 + n` when `n` smoke suites fail.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use obstacle_mg::smoke::Fault;
use thiserror::Error;

use crate::config::CommonArgs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0} smoke suite(s) failed")]
    Smoke(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Smoke(n) => (2 + *n as i32).min(125),
        }
    }
}

impl From<obstacle_mg::Error> for CliError {
    fn from(e: obstacle_mg::Error) -> Self {
        use obstacle_mg::Error as E;
        match e {
            E::DegenerateCoefficient { .. }
            | E::NonFinite { .. }
            | E::NonFiniteBound(_)
            | E::Oracle(_)
            | E::UndefinedMetric(_)
            | E::SkipBudget { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "obstacle-mg", version, about = "Multigrid obstacle solver and multilevel dataset generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    /// Evaluate the monotone restriction with a minimum instead of a maximum.
    SignFlip,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one sample on the finest level.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        sample: Option<u64>,
        #[arg(long)]
        contact_tol: Option<f64>,
        /// Also write a CSV of coordinates, fields, solution and contact.
        #[arg(long)]
        csv: bool,
    },
    /// Generate and export a multilevel dataset.
    Dataset {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        validation: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Evaluate predictions against a dataset.
    Metrics {
        #[command(flatten)]
        common: CommonArgs,
        /// Predictions directory; repeat for repeated runs.
        #[arg(long = "predictions", value_name = "DIR", required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
    },
    /// Per-level errors against a refined reference.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        sample: Option<u64>,
    },
    /// Run the invariant self-checks.
    Smoke {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

fn pool(common: &CommonArgs) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.thread_count()?)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            common,
            sample,
            contact_tol,
            csv,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = sample {
                cfg.sample = s;
            }
            if let Some(t) = contact_tol {
                cfg.contact_tol = t;
            }
            let cfg = cfg.validated()?;
            pool(&common)?.install(|| commands::cmd_solve(&cfg, &common.out, csv).map(drop))
        }
        Command::Dataset {
            common,
            train,
            validation,
            test,
        } => {
            let mut cfg = common.resolve()?;
            cfg.counts.train = train.unwrap_or(cfg.counts.train);
            cfg.counts.validation = validation.unwrap_or(cfg.counts.validation);
            cfg.counts.test = test.unwrap_or(cfg.counts.test);
            pool(&common)?.install(|| commands::cmd_dataset(&cfg, &common.out).map(drop))
        }
        Command::Metrics {
            common,
            predictions,
            dataset,
        } => {
            let cfg = common.resolve()?;
            pool(&common)?.install(|| commands::cmd_metrics(&cfg, &predictions, &dataset, &common.out).map(drop))
        }
        Command::Convergence { common, sample } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = sample {
                cfg.sample = s;
            }
            pool(&common)?.install(|| commands::cmd_convergence(&cfg, &common.out).map(drop))
        }
        Command::Smoke { common, inject_fault } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = common.seed {
                cfg.smoke.seed = s;
            }
            let fault = inject_fault.map(|FaultArg::SignFlip| Fault::RestrictionSignFlip);
            pool(&common)?.install(|| commands::cmd_smoke(&cfg, &common.out, fault).map(drop))
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("obstacle-mg: {e}");
            e.exit_code()
        }
    }
}
