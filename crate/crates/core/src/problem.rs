//! One assembled obstacle problem: fields, operator, right-hand side and
//! obstacle dofs of a sample on a level.

use crate::error::Result;
use crate::fem::{assemble_operator, assemble_rhs, DofVector, SparseOperator};
use crate::fields::{eval_coefficient, eval_forcing, eval_obstacle, CaseConfig, NodalField, ParamVector};
use crate::grid::GridLevel;

#[derive(Debug, Clone)]
pub struct Problem {
    pub level: GridLevel,
    pub kappa: NodalField,
    pub forcing: NodalField,
    pub obstacle_field: NodalField,
    pub operator: SparseOperator,
    pub rhs: DofVector,
    /// `φ` at the interior dofs.
    pub obstacle: DofVector,
}

impl Problem {
    pub fn assemble(cfg: &CaseConfig, y: &ParamVector, level: GridLevel) -> Result<Self> {
        let kappa = eval_coefficient(cfg, y, level)?;
        let forcing = eval_forcing(cfg, level);
        let obstacle_field = eval_obstacle(cfg, y, level)?;
        let operator = assemble_operator(&kappa, level)?;
        let rhs = assemble_rhs(&forcing, level)?;
        let obstacle = obstacle_field.interior();
        Ok(Problem {
            level,
            kappa,
            forcing,
            obstacle_field,
            operator,
            rhs,
            obstacle,
        })
    }
}
