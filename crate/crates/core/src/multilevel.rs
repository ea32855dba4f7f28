//! Multilevel decomposition `u_L = Σ_ℓ v_ℓ` with `v_ℓ = u_ℓ − P u_{ℓ−1}`,
//! normalization constants and the per-level error budget.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{l2_norm, DofVector};
use crate::fields::{sample_params, CaseConfig, NodalField, ParamVector};
use crate::grid::{GridHierarchy, GridLevel};
use crate::problem::Problem;
use crate::transfer::{prolong, shared_pair};
use crate::vcmr::{build_stack, vcmr_solve, ComplementarityAudit, VcmrConfig};

/// Smallest admissible normalization constant.
pub const NORMALIZATION_FLOOR: f64 = 1e-12;

/// Solver settings used for every level of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub vcmr: VcmrConfig,
    /// Energy-increment tolerance of each solve.
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            vcmr: VcmrConfig::default(),
            tol: 1e-9,
        }
    }
}

/// Converged solution of one level.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub level: GridLevel,
    pub kappa: NodalField,
    pub forcing: NodalField,
    pub obstacle: NodalField,
    pub u: DofVector,
    pub cycles: usize,
    pub audit: ComplementarityAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipKind {
    /// The drawn coefficient is not positive at some node; the sample lies
    /// outside the uniformly elliptic parameter set.
    DegenerateCoefficient,
    /// The solver failed on an admissible sample.
    SolverFailure,
}

/// Why a sample was left out of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub sample_index: u64,
    /// Level that failed, 0 when the failure is not level specific.
    pub level: usize,
    pub kind: SkipKind,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct MultilevelSample {
    pub sample_index: u64,
    pub params: ParamVector,
    /// Index `ℓ-1` holds level `ℓ`.
    pub levels: Vec<LevelSolution>,
    pub corrections: Vec<DofVector>,
}

impl MultilevelSample {
    pub fn solutions(&self) -> Vec<&DofVector> {
        self.levels.iter().map(|l| &l.u).collect()
    }
}

/// Solves the sample on one level, with a V-cycle stack reaching down to
/// level 1.
///
/// Returns `Ok(Err(skip))` for failures that concern the sample only: a
/// degenerate coefficient, a non-converged solve or a non-finite iterate.
pub fn solve_on_level(
    cfg: &CaseConfig,
    y: &ParamVector,
    level: GridLevel,
    settings: &SolverSettings,
    sample_index: u64,
) -> Result<std::result::Result<LevelSolution, SkipRecord>> {
    let skip = |kind: SkipKind, reason: String| SkipRecord {
        sample_index,
        level: level.level(),
        kind,
        reason,
    };
    let solved = Problem::assemble(cfg, y, level).and_then(|p| {
        let hierarchy = GridHierarchy::build(level.level())?;
        let stack = build_stack(&p.operator, &hierarchy, settings.vcmr.omega_strategy)?;
        let o = vcmr_solve(&p.rhs, &p.obstacle, &stack, &settings.vcmr, settings.tol)?;
        Ok((p, o))
    });
    let (problem, outcome) = match solved {
        Ok(v) => v,
        Err(e @ Error::DegenerateCoefficient { .. }) => return Ok(Err(skip(SkipKind::DegenerateCoefficient, e.to_string()))),
        Err(e @ Error::NonFinite { .. }) => return Ok(Err(skip(SkipKind::SolverFailure, e.to_string()))),
        Err(e) => return Err(e),
    };
    if !outcome.converged {
        return Ok(Err(skip(
            SkipKind::SolverFailure,
            format!(
            "not converged after {} cycles (last increment {:e})",
            outcome.cycles,
                outcome.history.last().copied().unwrap_or(f64::NAN)
            ),
        )));
    }
    Ok(Ok(LevelSolution {
        level,
        kappa: problem.kappa,
        forcing: problem.forcing,
        obstacle: problem.obstacle_field,
        u: outcome.u,
        cycles: outcome.cycles,
        audit: outcome.audit,
    }))
}

/// Solves the sample independently on every level of `hierarchy`; the
/// first failing level aborts the sample.
pub fn solve_all_levels(
    cfg: &CaseConfig,
    y: &ParamVector,
    hierarchy: &GridHierarchy,
    settings: &SolverSettings,
    sample_index: u64,
) -> Result<std::result::Result<Vec<LevelSolution>, SkipRecord>> {
    let mut out = Vec::with_capacity(hierarchy.len());
    for &level in hierarchy.levels() {
        match solve_on_level(cfg, y, level, settings, sample_index)? {
            Ok(s) => out.push(s),
            Err(skip) => return Ok(Err(skip)),
        }
    }
    Ok(Ok(out))
}

/// Draws, solves and decomposes sample `sample_index`.
pub fn generate_sample(
    cfg: &CaseConfig,
    hierarchy: &GridHierarchy,
    settings: &SolverSettings,
    sample_index: u64,
) -> Result<std::result::Result<MultilevelSample, SkipRecord>> {
    let params = sample_params(cfg, sample_index)?;
    let levels = match solve_all_levels(cfg, &params, hierarchy, settings, sample_index)? {
        Ok(levels) => levels,
        Err(skip) => return Ok(Err(skip)),
    };
    let solutions: Vec<DofVector> = levels.iter().map(|l| l.u.clone()).collect();
    let corrections = corrections(&solutions)?;
    Ok(Ok(MultilevelSample {
        sample_index,
        params,
        levels,
        corrections,
    }))
}

fn check_levels(vs: &[DofVector]) -> Result<()> {
    for (k, v) in vs.iter().enumerate() {
        check_len(GridLevel::new(k + 1)?.dof_count(), v.len())?;
    }
    Ok(())
}

/// `v₁ = u₁`, `v_ℓ = u_ℓ − P u_{ℓ−1}`; `solutions[ℓ-1]` lives on level `ℓ`.
pub fn corrections(solutions: &[DofVector]) -> Result<Vec<DofVector>> {
    check_levels(solutions)?;
    let mut out = Vec::with_capacity(solutions.len());
    for (k, u) in solutions.iter().enumerate() {
        if k == 0 {
            out.push(u.clone());
        } else {
            let coarse = prolong(&solutions[k - 1], &*shared_pair(GridLevel::new(k)?)?)?;
            out.push(u.iter().zip(&coarse).map(|(a, b)| a - b).collect());
        }
    }
    Ok(out)
}

/// `Σ_ℓ P…P v_ℓ` on the finest level.
pub fn reconstruct(corrections: &[DofVector]) -> Result<DofVector> {
    check_levels(corrections)?;
    let Some(first) = corrections.first() else {
        return Err(Error::InvalidArgument("no corrections to reconstruct".into()));
    };
    let mut acc = first.clone();
    for (k, v) in corrections.iter().enumerate().skip(1) {
        acc = prolong(&acc, &*shared_pair(GridLevel::new(k)?)?)?;
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    Ok(acc)
}

/// Normalization constants `b_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationVector(pub Vec<f64>);

impl NormalizationVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Monte-Carlo estimate `b_ℓ = (mean_samples ‖v_ℓ‖_{L²}^p)^{1/p}`, floored at
/// [`NORMALIZATION_FLOOR`]. `samples[s][ℓ-1]` is the level-`ℓ` correction of
/// sample `s`.
pub fn estimate_normalization(samples: &[&[DofVector]], p_norm: f64) -> Result<NormalizationVector> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("normalization needs at least one sample".into()));
    };
    if !(p_norm.is_finite() && p_norm >= 1.0) {
        return Err(Error::InvalidArgument(format!("p_norm must be ≥ 1, got {p_norm}")));
    }
    let depth = first.len();
    let mut b = Vec::with_capacity(depth);
    for k in 0..depth {
        let level = GridLevel::new(k + 1)?;
        let mut acc = 0.0;
        for s in samples {
            check_len(depth, s.len())?;
            acc += l2_norm(&s[k], level)?.powf(p_norm);
        }
        let mean = acc / samples.len() as f64;
        b.push(mean.powf(1.0 / p_norm).max(NORMALIZATION_FLOOR));
    }
    Ok(NormalizationVector(b))
}

/// The combined bound `Σ_ℓ b_ℓ ε_ℓ`.
pub fn error_budget(per_level: &[f64], b: &NormalizationVector) -> Result<f64> {
    check_len(b.len(), per_level.len())?;
    Ok(per_level.iter().zip(&b.0).map(|(e, w)| e * w).sum())
}
