//! Multigrid with monotone restriction for the parametric obstacle problem
//! on nested uniform P1 grids of the unit square, and the tooling that turns
//! its solutions into multilevel training datasets.
//!
//! ```
//! use obstacle_mg::prelude::*;
//!
//! let cfg = CaseConfig::new(Case::DeterministicObstacle, 10, 7);
//! let hierarchy = GridHierarchy::build(3)?;
//! let problem = Problem::assemble(&cfg, &sample_params(&cfg, 0)?, hierarchy.finest())?;
//! let stack = build_stack(&problem.operator, &hierarchy, OmegaStrategy::Gershgorin)?;
//! let out = vcmr_solve(&problem.rhs, &problem.obstacle, &stack, &VcmrConfig::default(), 1e-10)?;
//! assert!(out.converged);
//! assert!(out.audit.worst() <= 1e-8);
//! # Ok::<(), obstacle_mg::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod fem;
pub mod fields;
pub mod grid;
pub mod metrics;
pub mod multilevel;
pub mod problem;
pub mod smoke;
pub mod smoother;
pub mod sparse;
pub mod transfer;
pub mod vcmr;

pub use error::{Error, Result};

/// The types needed for a typical solve.
pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::fields::{sample_params, Case, CaseConfig};
    pub use crate::grid::{GridHierarchy, GridLevel};
    pub use crate::multilevel::{generate_sample, SolverSettings};
    pub use crate::problem::Problem;
    pub use crate::smoother::OmegaStrategy;
    pub use crate::transfer::RestrictionMode;
    pub use crate::vcmr::{build_stack, vcmr_solve, VcmrConfig};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids-and-fem.md")]
    mod grids_and_fem {}
    #[doc = include_str!("../../../book/src/parametric-fields.md")]
    mod parametric_fields {}
    #[doc = include_str!("../../../book/src/projected-richardson.md")]
    mod projected_richardson {}
    #[doc = include_str!("../../../book/src/monotone-restriction.md")]
    mod monotone_restriction {}
    #[doc = include_str!("../../../book/src/vcmr.md")]
    mod vcmr {}
    #[doc = include_str!("../../../book/src/multilevel.md")]
    mod multilevel {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
