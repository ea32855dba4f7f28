//! Multigrid V-cycle with monotone restriction, the solve loop around it,
//! the complementarity audit and a brute-force active-set oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{energy_norm, DofVector, SparseOperator};
use crate::grid::GridHierarchy;
use crate::smoother::{choose_omega, iterate_to_tolerance, smooth, OmegaStrategy};
use crate::transfer::{galerkin_coarse, restrict_monotone, shared_pair, RestrictionMode, TransferPair};

/// Largest dof count accepted by [`active_set_oracle`].
pub const ORACLE_MAX_DOFS: usize = 20;
/// Slack used by the oracle's acceptance test.
pub const ORACLE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VcmrConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Step cap of the coarsest-level solve.
    pub coarse_steps: usize,
    /// Maximum number of cycles in [`vcmr_solve`].
    pub cycles: usize,
    pub coarse_tol: f64,
    pub restriction_mode: RestrictionMode,
    pub omega_strategy: OmegaStrategy,
}

impl Default for VcmrConfig {
    fn default() -> Self {
        VcmrConfig {
            pre_smooth: 3,
            post_smooth: 3,
            coarse_steps: 10_000,
            cycles: 500,
            coarse_tol: 1e-13,
            restriction_mode: RestrictionMode::ExactSupport,
            omega_strategy: OmegaStrategy::Gershgorin,
        }
    }
}

impl VcmrConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pre_smooth", self.pre_smooth),
            ("post_smooth", self.post_smooth),
            ("coarse_steps", self.coarse_steps),
            ("cycles", self.cycles),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if self.coarse_tol.is_nan() || self.coarse_tol < 0.0 {
            return Err(Error::InvalidArgument(format!("coarse_tol must be ≥ 0, got {}", self.coarse_tol)));
        }
        Ok(())
    }
}

/// Galerkin operators, damping values and transfer pairs of levels `1..=L`.
#[derive(Debug, Clone)]
pub struct LevelStack {
    /// `operators[ℓ-1]` lives on level `ℓ`.
    pub operators: Vec<SparseOperator>,
    pub omegas: Vec<f64>,
    /// `pairs[ℓ-1]` connects level `ℓ` to `ℓ+1`.
    pub pairs: Vec<Arc<TransferPair>>,
}

impl LevelStack {
    pub fn depth(&self) -> usize {
        self.operators.len()
    }

    pub fn finest(&self) -> &SparseOperator {
        self.operators.last().expect("stack has at least one level")
    }

    pub fn operator(&self, level: usize) -> &SparseOperator {
        &self.operators[level - 1]
    }

    pub fn omega(&self, level: usize) -> f64 {
        self.omegas[level - 1]
    }
}

/// Builds the chain `A_{ℓ-1} = Pᵀ A_ℓ P` from the finest operator down to
/// level 1, with one damping value per level.
pub fn build_stack(a_finest: &SparseOperator, hierarchy: &GridHierarchy, strategy: OmegaStrategy) -> Result<LevelStack> {
    if hierarchy.finest() != a_finest.level {
        return Err(Error::LevelMismatch {
            expected: hierarchy.finest().level(),
            got: a_finest.level.level(),
        });
    }
    let depth = hierarchy.len();
    let mut pairs = Vec::with_capacity(depth.saturating_sub(1));
    for l in 1..depth {
        pairs.push(shared_pair(hierarchy.level(l)?)?);
    }
    let mut operators = vec![a_finest.clone()];
    for pair in pairs.iter().rev() {
        let coarse = galerkin_coarse(operators.last().expect("nonempty"), pair)?;
        operators.push(coarse);
    }
    operators.reverse();
    let omegas = operators
        .iter()
        .map(|a| choose_omega(a, strategy))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelStack {
        operators,
        omegas,
        pairs,
    })
}

fn check_finite(u: &[f64], level: usize) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { level })
    }
}

fn cycle_in_place(u: &mut [f64], f: &[f64], phi: &[f64], level: usize, stack: &LevelStack, cfg: &VcmrConfig) -> Result<()> {
    let a = &stack.operator(level).matrix;
    let omega = stack.omega(level);
    let mut scratch = Vec::new();
    smooth(a, f, phi, omega, u, cfg.pre_smooth, &mut scratch);
    if level == 1 {
        iterate_to_tolerance(a, f, phi, omega, u, cfg.coarse_tol, cfg.coarse_steps, |_| {});
    } else {
        let pair = &stack.pairs[level - 2];
        let gap: Vec<f64> = phi.iter().zip(u.iter()).map(|(p, v)| p - v).collect();
        let phi_c = restrict_monotone(&gap, pair, cfg.restriction_mode)?;
        scratch.resize(u.len(), 0.0);
        a.mul_vec_into(u, &mut scratch);
        let residual: Vec<f64> = f.iter().zip(&scratch).map(|(fi, ai)| fi - ai).collect();
        let r_c = pair.restriction.mul_vec(&residual)?;
        let mut e = vec![0.0; r_c.len()];
        cycle_in_place(&mut e, &r_c, &phi_c, level - 1, stack, cfg)?;
        let correction = pair.prolongation.mul_vec(&e)?;
        for (ui, ci) in u.iter_mut().zip(&correction) {
            *ui += ci;
        }
    }
    smooth(a, f, phi, omega, u, cfg.post_smooth, &mut scratch);
    check_finite(u, level)
}

/// One V-cycle on `level` of the stack.
pub fn vcmr_cycle(u: &[f64], f: &[f64], phi: &[f64], level: usize, stack: &LevelStack, cfg: &VcmrConfig) -> Result<DofVector> {
    if level == 0 || level > stack.depth() {
        return Err(Error::LevelMismatch {
            expected: stack.depth(),
            got: level,
        });
    }
    let dim = stack.operator(level).dim();
    for v in [u, f, phi] {
        check_len(dim, v.len())?;
    }
    let mut out = u.to_vec();
    cycle_in_place(&mut out, f, phi, level, stack, cfg)?;
    Ok(out)
}

/// Violations of `u ≥ φ`, `A u ≥ f` and `(u − φ)·(A u − f) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplementarityAudit {
    /// `max(0, max_i (φ_i − u_i))`.
    pub feasibility: f64,
    /// `max(0, max_i (f_i − (A u)_i))`.
    pub residual: f64,
    /// `max_i |(u_i − φ_i)·(A u − f)_i|`.
    pub gap: f64,
}

impl ComplementarityAudit {
    pub fn worst(&self) -> f64 {
        self.feasibility.max(self.residual).max(self.gap)
    }
}

pub fn complementarity_residual(u: &[f64], a: &SparseOperator, f: &[f64], phi: &[f64]) -> Result<ComplementarityAudit> {
    check_len(a.dim(), f.len())?;
    check_len(a.dim(), phi.len())?;
    let au = a.apply(u)?;
    let mut audit = ComplementarityAudit::default();
    for i in 0..u.len() {
        let slack = u[i] - phi[i];
        let res = au[i] - f[i];
        audit.feasibility = audit.feasibility.max(-slack);
        audit.residual = audit.residual.max(-res);
        audit.gap = audit.gap.max((slack * res).abs());
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcmrOutcome {
    pub u: DofVector,
    pub cycles: usize,
    /// Energy norm of the increment of every cycle.
    pub history: Vec<f64>,
    pub converged: bool,
    pub audit: ComplementarityAudit,
}

/// Repeats V-cycles from `u⁰ = φ` until the energy increment is at most `tol`
/// and the complementarity audit at most `10·tol`, or until `cfg.cycles`
/// cycles. A non-finite `tol` runs exactly `cfg.cycles` cycles.
pub fn vcmr_solve(f: &[f64], phi: &[f64], stack: &LevelStack, cfg: &VcmrConfig, tol: f64) -> Result<VcmrOutcome> {
    cfg.validate()?;
    let a = stack.finest();
    let level = stack.depth();
    check_len(a.dim(), f.len())?;
    check_len(a.dim(), phi.len())?;
    let mut u = phi.to_vec();
    let mut history = Vec::new();
    let mut converged = !tol.is_finite();
    let mut audit = ComplementarityAudit::default();
    for cycle in 1..=cfg.cycles {
        let prev = u.clone();
        cycle_in_place(&mut u, f, phi, level, stack, cfg)?;
        let d: Vec<f64> = u.iter().zip(&prev).map(|(x, y)| x - y).collect();
        let inc = energy_norm(&d, a)?;
        history.push(inc);
        if tol.is_finite() && inc <= tol {
            audit = complementarity_residual(&u, a, f, phi)?;
            if audit.worst() <= 10.0 * tol {
                converged = true;
                return Ok(VcmrOutcome {
                    u,
                    cycles: cycle,
                    history,
                    converged,
                    audit,
                });
            }
        }
    }
    if !converged || !tol.is_finite() {
        audit = complementarity_residual(&u, a, f, phi)?;
    }
    Ok(VcmrOutcome {
        u,
        cycles: cfg.cycles,
        history,
        converged,
        audit,
    })
}

/// Exact solution of a small complementarity problem by enumerating active
/// sets. Candidates are visited in increasing bit order of the active mask.
pub fn active_set_oracle(a: &SparseOperator, f: &[f64], phi: &[f64]) -> Result<DofVector> {
    let n = a.dim();
    check_len(n, f.len())?;
    check_len(n, phi.len())?;
    if n > ORACLE_MAX_DOFS {
        return Err(Error::Oracle(format!("{n} dofs exceeds the limit of {ORACLE_MAX_DOFS}")));
    }
    let dense = DMatrix::from_fn(n, n, |r, c| a.matrix.get(r, c));
    let mut u = vec![0.0; n];
    let mut free = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        let active = |i: usize| mask & (1 << i) != 0;
        free.clear();
        free.extend((0..n).filter(|&i| !active(i)));
        for i in 0..n {
            u[i] = if active(i) { phi[i] } else { 0.0 };
        }
        if !free.is_empty() {
            let m = free.len();
            let sub = DMatrix::from_fn(m, m, |r, c| dense[(free[r], free[c])]);
            let rhs = DVector::from_fn(m, |r, _| {
                let i = free[r];
                f[i] - (0..n).filter(|&j| active(j)).map(|j| dense[(i, j)] * phi[j]).sum::<f64>()
            });
            let Some(chol) = sub.cholesky() else {
                return Err(Error::Oracle("reduced operator is not positive definite".into()));
            };
            let x = chol.solve(&rhs);
            for (r, &i) in free.iter().enumerate() {
                u[i] = x[r];
            }
        }
        let au = &dense * DVector::from_column_slice(&u);
        let accepted = (0..n).all(|i| {
            let res = au[i] - f[i];
            if active(i) {
                res >= -ORACLE_SLACK
            } else {
                u[i] >= phi[i] && res.abs() <= ORACLE_SLACK
            }
        });
        if accepted {
            return Ok(u);
        }
    }
    Err(Error::Oracle("no active set satisfies the complementarity conditions".into()))
}
