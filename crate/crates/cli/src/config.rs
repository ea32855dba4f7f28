//! Run configuration: a JSON document overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use obstacle_mg::dataset::{SplitCounts, SplitOffsets};
use obstacle_mg::fields::{Case, CaseConfig};
use obstacle_mg::multilevel::SolverSettings;
use obstacle_mg::smoke::SmokeConfig;
use obstacle_mg::transfer::RestrictionMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every setting that influences results. Thread count and output
/// directory are deliberately absent so that the echo is identical across
/// machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub case: CaseConfig,
    pub levels: usize,
    pub solver: SolverSettings,
    pub counts: SplitCounts,
    pub offsets: SplitOffsets,
    /// Extra refinements of the reference grid, 1 or 2.
    pub ref_refine: usize,
    /// Sample index used by `solve` and `convergence`.
    pub sample: u64,
    /// A dof is in contact when `u − φ ≤ contact_tol`.
    pub contact_tol: f64,
    pub smoke: SmokeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: CaseConfig::new(Case::DeterministicObstacle, 10, 0),
            levels: 3,
            solver: SolverSettings::default(),
            counts: SplitCounts {
                train: 8,
                validation: 4,
                test: 4,
            },
            offsets: SplitOffsets::default(),
            ref_refine: 1,
            sample: 0,
            contact_tol: 1e-12,
            smoke: SmokeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Resolves derived fields and checks every setting.
    pub fn validated(mut self) -> Result<Self, CliError> {
        self.case = self.case.resolved().map_err(config)?;
        self.case.validate().map_err(config)?;
        self.solver.vcmr.validate().map_err(config)?;
        if self.levels == 0 {
            return Err(CliError::Config("levels must be at least 1".into()));
        }
        if !(1..=2).contains(&self.ref_refine) {
            return Err(CliError::Config(format!("ref_refine must be 1 or 2, got {}", self.ref_refine)));
        }
        if !(self.solver.tol > 0.0) {
            return Err(CliError::Config(format!("tol must be positive, got {}", self.solver.tol)));
        }
        if !(self.contact_tol >= 0.0 && self.contact_tol.is_finite()) {
            return Err(CliError::Config(format!("contact_tol must be finite and ≥ 0, got {}", self.contact_tol)));
        }
        Ok(self)
    }
}

fn config(e: obstacle_mg::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RestrictionArg {
    Exact,
    #[value(name = "3x3")]
    ThreeByThree,
}

impl From<RestrictionArg> for RestrictionMode {
    fn from(r: RestrictionArg) -> Self {
        match r {
            RestrictionArg::Exact => RestrictionMode::ExactSupport,
            RestrictionArg::ThreeByThree => RestrictionMode::ThreeByThree,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub case: Option<u8>,
    #[arg(long, value_name = "L")]
    pub levels: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "OBSTACLE_MG_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "obstacle-mg-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub pre_smooth: Option<usize>,
    #[arg(long)]
    pub post_smooth: Option<usize>,
    #[arg(long)]
    pub coarse_steps: Option<usize>,
    #[arg(long, value_enum)]
    pub restriction: Option<RestrictionArg>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub ref_refine: Option<u8>,
    /// Constant forcing replacing the case default.
    #[arg(long, allow_negative_numbers = true)]
    pub forcing: Option<f64>,
    /// Constant obstacle replacing the case obstacle.
    #[arg(long, allow_negative_numbers = true)]
    pub obstacle: Option<f64>,
}

impl CommonArgs {
    /// Config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(n) = self.case {
            c.case.case = Case::from_number(n).map_err(config)?;
        }
        if let Some(l) = self.levels {
            c.levels = l;
        }
        if let Some(p) = self.p {
            c.case.p = p;
        }
        if let Some(s) = self.seed {
            c.case.master_seed = s;
        }
        if let Some(t) = self.tol {
            c.solver.tol = t;
        }
        if let Some(m) = self.cycles {
            c.solver.vcmr.cycles = m;
        }
        if let Some(k) = self.pre_smooth {
            c.solver.vcmr.pre_smooth = k;
        }
        if let Some(k) = self.post_smooth {
            c.solver.vcmr.post_smooth = k;
        }
        if let Some(k0) = self.coarse_steps {
            c.solver.vcmr.coarse_steps = k0;
        }
        if let Some(r) = self.restriction {
            c.solver.vcmr.restriction_mode = r.into();
        }
        if let Some(r) = self.ref_refine {
            c.ref_refine = r as usize;
        }
        if self.forcing.is_some() {
            c.case.forcing = self.forcing;
        }
        if self.obstacle.is_some() {
            c.case.obstacle = self.obstacle;
        }
        c.validated()
    }

    pub fn thread_count(&self) -> Result<usize, CliError> {
        match self.threads {
            Some(0) => Err(CliError::Config("threads must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(1),
        }
    }
}
