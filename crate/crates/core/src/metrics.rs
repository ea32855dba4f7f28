//! Mean relative errors, reference solutions and convergence studies.
//!
//! Norms are always the exact P1 quadratic forms of [`crate::fem`]; a
//! candidate on a coarser grid is embedded into the target grid by
//! prolongation before comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{norm_forms, DofVector};
use crate::fields::{sample_params, CaseConfig};
use crate::grid::GridLevel;
use crate::multilevel::{solve_on_level, SkipRecord, SolverSettings};
use crate::transfer::{prolong, shared_pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    H1,
    L2,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::H1 => "H1",
            Norm::L2 => "L2",
        }
    }

    pub fn eval(self, v: &[f64], level: GridLevel) -> Result<f64> {
        let forms = norm_forms(level);
        match self {
            Norm::H1 => forms.h1_norm(v),
            Norm::L2 => forms.l2_norm(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Against {
    SameGrid,
    Reference,
}

/// Embeds a dof vector of level `from` into level `to ≥ from`.
pub fn prolong_to(v: &[f64], from: GridLevel, to: GridLevel) -> Result<DofVector> {
    check_len(from.dof_count(), v.len())?;
    if to.level() < from.level() {
        return Err(Error::LevelMismatch {
            expected: from.level(),
            got: to.level(),
        });
    }
    let mut out = v.to_vec();
    for l in from.level()..to.level() {
        out = prolong(&out, &*shared_pair(GridLevel::new(l)?)?)?;
    }
    Ok(out)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `sqrt(Σ_i ‖p_i − t_i‖² / Σ_i ‖t_i‖²)` over the samples, both given as dof
/// vectors on `level`.
pub fn mean_relative_error(predictions: &[DofVector], targets: &[DofVector], level: GridLevel, norm: Norm) -> Result<f64> {
    Ok(error_report(predictions, targets, level, norm, Against::SameGrid)?.value)
}

/// The aggregate error together with per-sample relative errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub norm: Norm,
    pub against: Against,
    pub value: f64,
    /// `‖p_i − t_i‖ / ‖t_i‖`, `None` where the target vanishes.
    pub per_sample: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_level: Option<Vec<Option<f64>>>,
}

pub fn error_report(
    predictions: &[DofVector],
    targets: &[DofVector],
    level: GridLevel,
    norm: Norm,
    against: Against,
) -> Result<ErrorReport> {
    check_len(targets.len(), predictions.len())?;
    let pairs: Vec<(f64, f64)> = predictions
        .par_iter()
        .zip(targets)
        .map(|(p, t)| {
            check_len(level.dof_count(), p.len())?;
            check_len(level.dof_count(), t.len())?;
            Ok((norm.eval(&diff(p, t), level)?, norm.eval(t, level)?))
        })
        .collect::<Result<_>>()?;
    let num: f64 = pairs.iter().map(|(e, _)| e * e).sum();
    let den: f64 = pairs.iter().map(|(_, t)| t * t).sum();
    if den == 0.0 || !den.is_finite() {
        return Err(Error::UndefinedMetric(format!(
            "{} norm of the targets is {den}",
            norm.name()
        )));
    }
    Ok(ErrorReport {
        norm,
        against,
        value: (num / den).sqrt(),
        per_sample: pairs.iter().map(|&(e, t)| (t > 0.0).then(|| e / t)).collect(),
        per_level: None,
    })
}

/// Levelwise [`mean_relative_error`]; `predicted[ℓ-1][s]` is the level-`ℓ`
/// correction of sample `s`. Levels whose targets vanish are `None`.
pub fn per_level_errors(predicted: &[Vec<DofVector>], truth: &[Vec<DofVector>], norm: Norm) -> Result<Vec<Option<f64>>> {
    check_len(truth.len(), predicted.len())?;
    predicted
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(k, (p, t))| match mean_relative_error(p, t, GridLevel::new(k + 1)?, norm) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Solutions of the given samples on level `levels + extra_refinements`.
pub fn reference_solutions(
    cfg: &CaseConfig,
    sample_indices: &[u64],
    levels: usize,
    extra_refinements: usize,
    settings: &SolverSettings,
) -> Result<Vec<std::result::Result<DofVector, SkipRecord>>> {
    if !(1..=2).contains(&extra_refinements) {
        return Err(Error::InvalidArgument(format!(
            "extra refinements must be 1 or 2, got {extra_refinements}"
        )));
    }
    let level = GridLevel::new(levels + extra_refinements)?;
    sample_indices
        .par_iter()
        .map(|&idx| {
            let y = sample_params(cfg, idx)?;
            Ok(solve_on_level(cfg, &y, level, settings, idx)?.map(|s| s.u))
        })
        .collect()
}

/// Relative error of coarse candidates against references on a finer level.
pub fn reference_error(
    candidates: &[DofVector],
    candidate_level: GridLevel,
    references: &[DofVector],
    reference_level: GridLevel,
    norm: Norm,
) -> Result<ErrorReport> {
    let lifted = candidates
        .par_iter()
        .map(|c| prolong_to(c, candidate_level, reference_level))
        .collect::<Result<Vec<_>>>()?;
    error_report(&lifted, references, reference_level, norm, Against::Reference)
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub dofs: usize,
    pub h1_error: f64,
    pub l2_error: f64,
    /// Previous level's error over this level's.
    pub h1_ratio: Option<f64>,
    pub l2_ratio: Option<f64>,
    pub converged: bool,
}

/// Errors `‖P…P u_ℓ − u_ref‖` of one sample for `ℓ = 1..=levels` against
/// its solution on level `levels + extra_refinements`. A level that does
/// not converge is recorded with `converged = false` and NaN errors.
pub fn convergence_study(
    cfg: &CaseConfig,
    sample_index: u64,
    levels: usize,
    extra_refinements: usize,
    settings: &SolverSettings,
) -> Result<Vec<ConvergenceRow>> {
    let y = sample_params(cfg, sample_index)?;
    let reference = reference_solutions(cfg, &[sample_index], levels, extra_refinements, settings)?
        .pop()
        .expect("one reference");
    let ref_level = GridLevel::new(levels + extra_refinements)?;
    let solved: Vec<_> = (1..=levels)
        .into_par_iter()
        .map(|l| solve_on_level(cfg, &y, GridLevel::new(l)?, settings, sample_index))
        .collect::<Result<_>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for (k, s) in solved.into_iter().enumerate() {
        let level = GridLevel::new(k + 1)?;
        let (h1, l2, converged) = match (&s, &reference) {
            (Ok(s), Ok(r)) => {
                let e = diff(&prolong_to(&s.u, level, ref_level)?, r);
                (Norm::H1.eval(&e, ref_level)?, Norm::L2.eval(&e, ref_level)?, true)
            }
            _ => (f64::NAN, f64::NAN, false),
        };
        let prev = rows.last();
        rows.push(ConvergenceRow {
            level: k + 1,
            dofs: level.dof_count(),
            h1_error: h1,
            l2_error: l2,
            h1_ratio: prev.map(|p| p.h1_error / h1),
            l2_ratio: prev.map(|p| p.l2_error / l2),
            converged,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6e}"))
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("level,dofs,h1_error,l2_error,h1_ratio,l2_ratio,converged\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{:.6e},{:.6e},{},{},{}",
            r.level,
            r.dofs,
            r.h1_error,
            r.l2_error,
            opt(r.h1_ratio),
            opt(r.l2_ratio),
            r.converged
        )
        .expect("writing to a String");
    }
    s
}

/// Mean and sample standard deviation of repeated measurements.
pub fn mean_and_spread(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One line of the error table: a problem, a norm and its two errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub problem: String,
    pub p: usize,
    pub norm: Norm,
    pub e_mr: f64,
    pub e_mr_ref: Option<f64>,
    /// Mean and spread of `e_mr` over repeated runs.
    pub mean: f64,
    pub spread: f64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("problem,p,norm,E_MR,E_MR_ref,mean,spread\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.6e},{},{:.6e},{:.6e}",
            r.problem,
            r.p,
            r.norm.name(),
            r.e_mr,
            opt(r.e_mr_ref),
            r.mean,
            r.spread
        )
        .expect("writing to a String");
    }
    s
}

pub fn per_level_csv(errors: &[(Norm, Vec<Option<f64>>)]) -> String {
    let mut s = String::from("norm,level,error\n");
    for (norm, levels) in errors {
        for (k, e) in levels.iter().enumerate() {
            writeln!(s, "{},{},{}", norm.name(), k + 1, opt(*e)).expect("writing to a String");
        }
    }
    s
}
