//! Projected Richardson iteration
//! `u ← max(u + ω(f − A u), φ)` and the choice of the damping `ω`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{power_iteration, sigma_max_bound, DofVector, SparseOperator};
use crate::sparse::CsrMatrix;

/// Power-iteration steps used by [`OmegaStrategy::PowerIterationSafeguarded`].
pub const POWER_STEPS: usize = 100;
/// Safety factor on the power-iteration eigenvalue estimate.
pub const POWER_SAFEGUARD: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaStrategy {
    /// `ω = 1 / max_i Σ_j |A_ij|`.
    #[default]
    Gershgorin,
    /// `ω = 1 / (1.05 σ̂)` with `σ̂` from 100 power iterations.
    PowerIterationSafeguarded,
    Manual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub omega: f64,
    pub strategy: OmegaStrategy,
}

impl SmootherConfig {
    pub fn for_operator(a: &SparseOperator, strategy: OmegaStrategy) -> Result<Self> {
        Ok(SmootherConfig {
            omega: choose_omega(a, strategy)?,
            strategy,
        })
    }
}

pub fn choose_omega(a: &SparseOperator, strategy: OmegaStrategy) -> Result<f64> {
    let omega = match strategy {
        OmegaStrategy::Gershgorin => {
            let bound = sigma_max_bound(a);
            if !(bound.is_finite() && bound > 0.0) {
                return Err(Error::NonFiniteBound(bound));
            }
            1.0 / bound
        }
        OmegaStrategy::PowerIterationSafeguarded => {
            let est = power_iteration(&a.matrix, POWER_STEPS);
            if !(est.is_finite() && est > 0.0) {
                return Err(Error::NonFiniteBound(est));
            }
            1.0 / (POWER_SAFEGUARD * est)
        }
        OmegaStrategy::Manual(w) => w,
    };
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidArgument(format!("damping must be positive, got {omega}")));
    }
    Ok(omega)
}

fn check_dims(a: &SparseOperator, vecs: &[&[f64]]) -> Result<()> {
    vecs.iter().try_for_each(|v| check_len(a.dim(), v.len()))
}

/// One projected Richardson step.
pub fn pr_step(u: &[f64], a: &SparseOperator, f: &[f64], phi: &[f64], omega: f64) -> Result<DofVector> {
    check_dims(a, &[u, f, phi])?;
    let mut au = vec![0.0; u.len()];
    a.matrix.mul_vec_into(u, &mut au);
    Ok(u.iter()
        .zip(&au)
        .zip(f.iter().zip(phi))
        .map(|((&ui, &aui), (&fi, &pi))| (ui + omega * (fi - aui)).max(pi))
        .collect())
}

/// `steps` projected Richardson steps in place.
pub(crate) fn smooth(a: &CsrMatrix, f: &[f64], phi: &[f64], omega: f64, u: &mut [f64], steps: usize, scratch: &mut Vec<f64>) {
    scratch.resize(u.len(), 0.0);
    for _ in 0..steps {
        a.mul_vec_into(u, scratch);
        for i in 0..u.len() {
            u[i] = (u[i] + omega * (f[i] - scratch[i])).max(phi[i]);
        }
    }
}

/// Iterates until `‖u^{k+1} − u^k‖_A ≤ tol` or `max_steps`; returns the step
/// count and whether the tolerance was met. One matrix product per step.
/// A non-finite `tol` runs exactly `max_steps` steps.
pub(crate) fn iterate_to_tolerance(
    a: &CsrMatrix,
    f: &[f64],
    phi: &[f64],
    omega: f64,
    u: &mut [f64],
    tol: f64,
    max_steps: usize,
    mut on_increment: impl FnMut(f64),
) -> (usize, bool) {
    let n = u.len();
    let mut au = vec![0.0; n];
    let mut au_next = vec![0.0; n];
    let mut prev = vec![0.0; n];
    a.mul_vec_into(u, &mut au);
    for step in 1..=max_steps {
        prev.copy_from_slice(u);
        for i in 0..n {
            u[i] = (u[i] + omega * (f[i] - au[i])).max(phi[i]);
        }
        a.mul_vec_into(u, &mut au_next);
        // ‖d‖²_A = dᵀ(A u_new − A u_old)
        let mut inc2 = 0.0;
        for i in 0..n {
            inc2 += (u[i] - prev[i]) * (au_next[i] - au[i]);
        }
        let inc = inc2.max(0.0).sqrt();
        on_increment(inc);
        std::mem::swap(&mut au, &mut au_next);
        if tol.is_finite() && inc <= tol {
            return (step, true);
        }
    }
    (max_steps, !tol.is_finite())
}

/// Stopping rule shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveControl {
    /// Tolerance on the energy norm of the increment; `∞` means run exactly
    /// `max_iters` iterations.
    pub tol: f64,
    /// Maximum number of iterations (or cycles).
    pub max_iters: usize,
    /// Longest increment history kept; later entries are dropped.
    pub history_cap: usize,
}

impl Default for SolveControl {
    fn default() -> Self {
        SolveControl {
            tol: 1e-8,
            max_iters: 1_000_000,
            history_cap: 10_000,
        }
    }
}

/// Result of an iterative solve. Non-convergence is reported here, not as
/// an error.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub u: DofVector,
    pub iterations: usize,
    /// Energy norm of each increment, capped at `history_cap` entries.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Projected Richardson from `u⁰ = φ`.
pub fn pr_solve(a: &SparseOperator, f: &[f64], phi: &[f64], omega: f64, control: &SolveControl) -> Result<SolveOutcome> {
    check_dims(a, &[f, phi])?;
    let mut u = phi.to_vec();
    let mut history = Vec::new();
    let (iterations, converged) =
        iterate_to_tolerance(&a.matrix, f, phi, omega, &mut u, control.tol, control.max_iters, |inc| {
            if history.len() < control.history_cap {
                history.push(inc);
            }
        });
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { level: a.level.level() });
    }
    Ok(SolveOutcome {
        u,
        iterations,
        history,
        converged,
    })
}
