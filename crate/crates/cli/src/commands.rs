use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use obstacle_mg::dataset::{
    export_dataset, generate_dataset, import_dataset, import_predictions, write_json, DatasetSpec, Role, Split,
};
use obstacle_mg::fem::DofVector;
use obstacle_mg::fields::sample_params;
use obstacle_mg::grid::{GridHierarchy, GridLevel};
use obstacle_mg::metrics::{
    convergence_csv, convergence_study, error_report, mean_and_spread, metrics_csv, per_level_csv,
    per_level_errors, reference_error, reference_solutions, Against, ConvergenceRow, ErrorReport, MetricsRow, Norm,
};
use obstacle_mg::problem::Problem;
use obstacle_mg::smoke::{run_smoke, Fault, SmokeReport};
use obstacle_mg::vcmr::{build_stack, vcmr_solve, ComplementarityAudit};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const ECHO_FILE: &str = "run_config.json";

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    config: &'a RunConfig,
}

fn prepare_out(out: &Path, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    write_json(&out.join(ECHO_FILE), &Echo { command, config: cfg })?;
    Ok(())
}

fn write_f64(path: &Path, values: &[f64]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub level: usize,
    pub sample_index: u64,
    pub nodes_per_side: usize,
    pub cycles: usize,
    pub converged: bool,
    pub audit: ComplementarityAudit,
    pub contact_nodes: usize,
    pub increments: Vec<f64>,
}

/// Solves one sample on level `L`. Writes the full-grid solution, the
/// contact indicator and the audit even when the solve fails to converge.
pub fn cmd_solve(cfg: &RunConfig, out: &Path, csv: bool) -> Result<SolveReport, CliError> {
    prepare_out(out, "solve", cfg)?;
    let start = Instant::now();
    let hierarchy = GridHierarchy::build(cfg.levels)?;
    let level = hierarchy.finest();
    let y = sample_params(&cfg.case, cfg.sample)?;
    let problem = Problem::assemble(&cfg.case, &y, level)?;
    let stack = build_stack(&problem.operator, &hierarchy, cfg.solver.vcmr.omega_strategy)?;
    let outcome = vcmr_solve(&problem.rhs, &problem.obstacle, &stack, &cfg.solver.vcmr, cfg.solver.tol)?;
    let contact: Vec<f64> = outcome
        .u
        .iter()
        .zip(&problem.obstacle)
        .map(|(u, p)| if u - p <= cfg.contact_tol { 1.0 } else { 0.0 })
        .collect();
    let l = level.level();
    let u_full = level.full_from_dofs(&outcome.u)?;
    let contact_full = level.full_from_dofs(&contact)?;
    write_f64(&out.join(format!("solution_L{l}.f64")), &u_full)?;
    write_f64(&out.join(format!("contact_L{l}.f64")), &contact_full)?;
    let report = SolveReport {
        level: l,
        sample_index: cfg.sample,
        nodes_per_side: level.nodes_per_side(),
        cycles: outcome.cycles,
        converged: outcome.converged,
        audit: outcome.audit,
        contact_nodes: contact.iter().filter(|&&c| c > 0.0).count(),
        increments: outcome.history.clone(),
    };
    write_json(&out.join("audit.json"), &report)?;
    if csv {
        let mut s = String::from("x,y,kappa,obstacle,u,contact\n");
        for k in 0..level.node_count() {
            let [x, yy] = level.node_coordinates(level.unflatten(k))?;
            writeln!(
                s,
                "{x},{yy},{},{},{},{}",
                problem.kappa.values[k], problem.obstacle_field.values[k], u_full[k], contact_full[k]
            )
            .expect("writing to a String");
        }
        write_text(&out.join(format!("solution_L{l}.csv")), &s)?;
    }
    let a = &report.audit;
    println!(
        "solve: level {l}, sample {}, {} cycles, converged {}, feasibility {:.3e}, residual {:.3e}, gap {:.3e}, contact nodes {}",
        cfg.sample, report.cycles, report.converged, a.feasibility, a.residual, a.gap, report.contact_nodes
    );
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    if !report.converged {
        return Err(CliError::Numerical(format!(
            "solve did not converge in {} cycles",
            report.cycles
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub normalization: Vec<f64>,
    /// Mean V-cycle count per level over all generated samples.
    pub mean_cycles: Vec<f64>,
    pub skipped: usize,
}

pub fn cmd_dataset(cfg: &RunConfig, out: &Path) -> Result<DatasetSummary, CliError> {
    prepare_out(out, "dataset", cfg)?;
    let start = Instant::now();
    let spec = DatasetSpec {
        case: cfg.case.clone(),
        levels: cfg.levels,
        counts: cfg.counts,
        offsets: cfg.offsets,
        solver: cfg.solver,
    };
    let data = generate_dataset(&spec)?;
    let manifest = export_dataset(&data, out)?;
    let all: Vec<_> = Split::ALL.iter().flat_map(|&s| data.split(s)).collect();
    let mean_cycles = (0..cfg.levels)
        .map(|k| {
            if all.is_empty() {
                0.0
            } else {
                all.iter().map(|s| s.levels[k].cycles as f64).sum::<f64>() / all.len() as f64
            }
        })
        .collect::<Vec<_>>();
    for (k, (b, c)) in manifest.normalization.iter().zip(&mean_cycles).enumerate() {
        println!("level {}: b = {b:.6e}, mean cycles {c:.1}", k + 1);
    }
    println!(
        "dataset: {} train, {} validation, {} test, {} skipped, p = {}",
        cfg.counts.train,
        cfg.counts.validation,
        cfg.counts.test,
        data.skipped.len(),
        manifest.case.p
    );
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(DatasetSummary {
        normalization: manifest.normalization,
        mean_cycles,
        skipped: data.skipped.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub split: Split,
    pub runs: usize,
    pub rows: Vec<MetricsRow>,
    /// Per-level errors of the first run, one entry per norm.
    pub per_level: Vec<(Norm, Vec<Option<f64>>)>,
    pub same_grid: Vec<ErrorReport>,
    pub reference: Vec<ErrorReport>,
}

fn dofs_of(rows: Vec<Vec<f64>>, level: GridLevel) -> Result<Vec<DofVector>, CliError> {
    rows.iter()
        .map(|r| level.interior_values(r).map_err(CliError::from))
        .collect()
}

/// Compares surrogate predictions against the dataset they were trained on.
/// Each directory in `predictions` is one repeated run.
pub fn cmd_metrics(cfg: &RunConfig, predictions: &[PathBuf], dataset: &Path, out: &Path) -> Result<MetricsReport, CliError> {
    prepare_out(out, "metrics", cfg)?;
    let start = Instant::now();
    if predictions.is_empty() {
        return Err(CliError::Config("at least one predictions directory is required".into()));
    }
    let ds = import_dataset(dataset)?;
    let m = &ds.manifest;
    let runs = predictions
        .iter()
        .map(|p| import_predictions(p).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let split = runs[0].manifest.split;
    for (dir, r) in predictions.iter().zip(&runs) {
        let pm = &r.manifest;
        if pm.split != split || pm.levels != m.levels || pm.grid_sizes != m.grid_sizes || pm.count != m.counts.get(split) {
            return Err(CliError::Config(format!(
                "predictions in {} do not match the dataset layout",
                dir.display()
            )));
        }
    }
    let finest = GridLevel::new(m.levels)?;
    let truth = dofs_of(ds.read_all(Role::Solution, m.levels, split)?, finest)?;
    let mut true_corr = Vec::with_capacity(m.levels);
    for l in 1..=m.levels {
        true_corr.push(dofs_of(ds.read_all(Role::Correction, l, split)?, GridLevel::new(l)?)?);
    }
    let indices = ds.sample_indices(split);
    let refs = reference_solutions(&m.case, &indices, m.levels, cfg.ref_refine, &cfg.solver)?
        .into_iter()
        .map(|r| r.map_err(|s| CliError::Numerical(format!("reference solve of sample {} failed: {}", s.sample_index, s.reason))))
        .collect::<Result<Vec<_>, _>>()?;
    let ref_level = GridLevel::new(m.levels + cfg.ref_refine)?;

    let mut same_grid = Vec::new();
    let mut reference = Vec::new();
    let mut per_level = Vec::new();
    let mut rows = Vec::new();
    for norm in [Norm::H1, Norm::L2] {
        let mut e = Vec::new();
        let mut e_ref = Vec::new();
        for (k, run) in runs.iter().enumerate() {
            let assembled = dofs_of(run.assembled()?, finest)?;
            let mut same = error_report(&assembled, &truth, finest, norm, Against::SameGrid)?;
            let against_ref = reference_error(&assembled, finest, &refs, ref_level, norm)?;
            if k == 0 {
                let mut pred_corr = Vec::with_capacity(m.levels);
                for l in 1..=m.levels {
                    let rows = run
                        .per_level(l)?
                        .ok_or_else(|| CliError::Config(format!("predictions lack level {l}")))?;
                    pred_corr.push(dofs_of(rows, GridLevel::new(l)?)?);
                }
                let pl = per_level_errors(&pred_corr, &true_corr, norm)?;
                same.per_level = Some(pl.clone());
                per_level.push((norm, pl));
            }
            e.push(same.value);
            e_ref.push(against_ref.value);
            if k == 0 {
                same_grid.push(same);
                reference.push(against_ref);
            }
        }
        let (mean, spread) = mean_and_spread(&e);
        rows.push(MetricsRow {
            problem: format!("case{}", m.case.case.number()),
            p: m.case.p,
            norm,
            e_mr: mean,
            e_mr_ref: Some(mean_and_spread(&e_ref).0),
            mean,
            spread,
        });
    }
    let report = MetricsReport {
        split,
        runs: runs.len(),
        rows,
        per_level,
        same_grid,
        reference,
    };
    write_json(&out.join("metrics.json"), &report)?;
    write_text(&out.join("metrics.csv"), &metrics_csv(&report.rows))?;
    write_text(&out.join("per_level.csv"), &per_level_csv(&report.per_level))?;
    for r in &report.rows {
        println!(
            "{} {}: E_MR = {:.4e}, E_MR_ref = {:.4e}, spread {:.2e}",
            r.problem,
            r.norm.name(),
            r.e_mr,
            r.e_mr_ref.unwrap_or(f64::NAN),
            r.spread
        );
    }
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(report)
}

pub fn cmd_convergence(cfg: &RunConfig, out: &Path) -> Result<Vec<ConvergenceRow>, CliError> {
    prepare_out(out, "convergence", cfg)?;
    let start = Instant::now();
    let rows = convergence_study(&cfg.case, cfg.sample, cfg.levels, cfg.ref_refine, &cfg.solver)?;
    write_text(&out.join("convergence.csv"), &convergence_csv(&rows))?;
    write_json(&out.join("convergence.json"), &rows)?;
    for r in &rows {
        println!(
            "level {} ({} dofs): H1 {:.4e} L2 {:.4e}{}",
            r.level,
            r.dofs,
            r.h1_error,
            r.l2_error,
            if r.converged { "" } else { " (not converged)" }
        );
    }
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(rows)
}

pub fn cmd_smoke(cfg: &RunConfig, out: &Path, fault: Option<Fault>) -> Result<SmokeReport, CliError> {
    prepare_out(out, "smoke", cfg)?;
    let start = Instant::now();
    let mut smoke = cfg.smoke;
    if fault.is_some() {
        smoke.fault = fault;
    }
    let report = run_smoke(&smoke)?;
    write_json(&out.join("smoke.json"), &report)?;
    for s in &report.suites {
        println!(
            "{} {} ({} checks, {} failures, worst {:.3e})",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            s.checks,
            s.failures,
            s.worst
        );
    }
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    match report.failed() {
        0 => Ok(report),
        n => Err(CliError::Smoke(n)),
    }
}
