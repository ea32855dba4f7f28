//! Runtime self-checks of the solver invariants.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{energy_norm, SparseOperator};
use crate::fields::{sample_params, Case, CaseConfig};
use crate::grid::{GridHierarchy, GridLevel};
use crate::multilevel::{generate_sample, reconstruct, SolverSettings};
use crate::problem::Problem;
use crate::smoother::{pr_solve, pr_step, SolveControl};
use crate::transfer::{prolong, restrict_monotone, restrict_weighted, shared_pair, RestrictionMode, TransferPair};
use crate::vcmr::{active_set_oracle, build_stack, vcmr_solve, VcmrConfig};

/// Deliberate defects used to check that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Monotone restriction evaluated as `−R^max(−w)`, a minimum.
    RestrictionSignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmokeConfig {
    pub seed: u64,
    pub oracle_instances: usize,
    pub contraction_instances: usize,
    pub safety_triples: usize,
    pub telescoping_samples: usize,
    pub adjoint_pairs: usize,
    pub fault: Option<Fault>,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        SmokeConfig {
            seed: 1,
            oracle_instances: 20,
            contraction_instances: 5,
            safety_triples: 1000,
            telescoping_samples: 10,
            adjoint_pairs: 100,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    /// Largest observed deviation, in the suite's own units.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeReport {
    pub suites: Vec<SuiteResult>,
}

impl SmokeReport {
    pub fn failed(&self) -> usize {
        self.suites.iter().filter(|s| !s.passed).count()
    }
}

fn suite(name: &str, checks: usize, failures: usize, worst: f64) -> SuiteResult {
    SuiteResult {
        name: name.to_string(),
        passed: failures == 0,
        checks,
        failures,
        worst,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Case-1 instance on level 1; even indices use forcing −1 so that the
/// obstacle is active somewhere.
fn oracle_instance(seed: u64, i: usize) -> Result<Problem> {
    let mut cfg = CaseConfig::new(Case::DeterministicObstacle, 10, seed);
    if i % 2 == 0 {
        cfg.forcing = Some(-1.0);
    }
    Problem::assemble(&cfg, &sample_params(&cfg, i as u64)?, GridLevel::new(1)?)
}

fn oracle_suite(cfg: &SmokeConfig) -> Result<SuiteResult> {
    let h = GridHierarchy::build(1)?;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let vcfg = VcmrConfig::default();
    for i in 0..cfg.oracle_instances {
        let p = oracle_instance(cfg.seed, i)?;
        let exact = active_set_oracle(&p.operator, &p.rhs, &p.obstacle)?;
        let stack = build_stack(&p.operator, &h, vcfg.omega_strategy)?;
        let control = SolveControl {
            tol: 1e-13,
            ..Default::default()
        };
        let pr = pr_solve(&p.operator, &p.rhs, &p.obstacle, stack.omega(1), &control)?;
        let mg = vcmr_solve(&p.rhs, &p.obstacle, &stack, &vcfg, 1e-13)?;
        let d = max_abs_diff(&pr.u, &exact).max(max_abs_diff(&mg.u, &exact));
        worst = worst.max(d);
        if d > 1e-8 || !pr.converged || !mg.converged {
            failures += 1;
        }
    }
    Ok(suite("oracle-agreement", cfg.oracle_instances, failures, worst))
}

/// `‖I − ωA‖_A = max_i |1 − ωσ_i|` from a dense eigendecomposition.
pub fn richardson_energy_norm(a: &SparseOperator, omega: f64) -> f64 {
    let n = a.dim();
    let dense = DMatrix::from_fn(n, n, |r, c| a.matrix.get(r, c));
    SymmetricEigen::new(dense)
        .eigenvalues
        .iter()
        .map(|s| (1.0 - omega * s).abs())
        .fold(0.0, f64::max)
}

fn contraction_suite(cfg: &SmokeConfig) -> Result<SuiteResult> {
    let h = GridHierarchy::build(2)?;
    let case = CaseConfig::new(Case::DeterministicObstacle, 10, cfg.seed);
    let mut checks = 0;
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..cfg.contraction_instances {
        let p = Problem::assemble(&case, &sample_params(&case, i as u64)?, h.finest())?;
        let stack = build_stack(&p.operator, &h, crate::smoother::OmegaStrategy::Gershgorin)?;
        let omega = stack.omega(2);
        let rate = richardson_energy_norm(&p.operator, omega);
        let reference = vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-13)?.u;
        let mut u = p.obstacle.clone();
        let err = |u: &[f64]| -> Result<f64> {
            let d: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
            energy_norm(&d, &p.operator)
        };
        let mut e = err(&u)?;
        for _ in 0..300 {
            u = pr_step(&u, &p.operator, &p.rhs, &p.obstacle, omega)?;
            let next = err(&u)?;
            checks += 1;
            worst = worst.max(next - rate * e);
            if next > rate * e + 1e-10 {
                failures += 1;
            }
            e = next;
        }
    }
    Ok(suite("contraction", checks, failures, worst))
}

/// Dyadic value in `[-scale, scale]`, so that sums and halvings are exact.
fn dyadic(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let k: i32 = rng.random_range(-(1 << 20)..=(1 << 20));
    scale * k as f64 / (1 << 20) as f64
}

/// `(u, φ, ē)` on `pair` with `ē ≥ R^max(φ − u)`. Even draws have `u ≥ φ`
/// everywhere; odd draws leave signs free except on the ring of fine dofs
/// next to the boundary, where a prolongated coarse value only reaches half.
pub fn safety_triple(
    rng: &mut ChaCha8Rng,
    pair: &TransferPair,
    mode: RestrictionMode,
    draw: usize,
    fault: Option<Fault>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let fine = pair.fine;
    let m = fine.interior_side();
    let n = fine.dof_count();
    let u: Vec<f64> = (0..n).map(|_| dyadic(rng, 1.0)).collect();
    let phi: Vec<f64> = (0..n)
        .map(|d| {
            let idx = fine.node_of_dof(d);
            let ring = idx.i == 1 || idx.j == 1 || idx.i == m || idx.j == m;
            if draw % 2 == 0 || ring {
                u[d] - dyadic(rng, 1.0).abs()
            } else {
                dyadic(rng, 1.0)
            }
        })
        .collect();
    let w: Vec<f64> = phi.iter().zip(&u).map(|(p, v)| p - v).collect();
    let bound = match fault {
        None => restrict_monotone(&w, pair, mode)?,
        Some(Fault::RestrictionSignFlip) => {
            let neg: Vec<f64> = w.iter().map(|x| -x).collect();
            restrict_monotone(&neg, pair, mode)?.iter().map(|x| -x).collect()
        }
    };
    let e = bound
        .iter()
        .map(|b| if rng.random_bool(0.5) { *b } else { b + dyadic(rng, 0.5).abs() })
        .collect();
    Ok((u, phi, e))
}

/// Number of fine dofs with `u + P ē < φ`.
pub fn safety_violations(u: &[f64], phi: &[f64], e: &[f64], pair: &TransferPair) -> Result<usize> {
    let pe = prolong(e, pair)?;
    Ok((0..u.len()).filter(|&i| u[i] + pe[i] < phi[i]).count())
}

fn safety_suite(cfg: &SmokeConfig) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = 0;
    let mut checks = 0;
    for mode in [RestrictionMode::ExactSupport, RestrictionMode::ThreeByThree] {
        for draw in 0..cfg.safety_triples {
            let pair = shared_pair(GridLevel::new(1 + draw % 2)?)?;
            let (u, phi, e) = safety_triple(&mut rng, &pair, mode, draw, cfg.fault)?;
            checks += 1;
            if safety_violations(&u, &phi, &e, &pair)? > 0 {
                failures += 1;
            }
        }
    }
    Ok(suite("safety", checks, failures, failures as f64))
}

fn telescoping_suite(cfg: &SmokeConfig) -> Result<SuiteResult> {
    let case = CaseConfig::new(Case::DeterministicObstacle, 10, cfg.seed);
    let h = GridHierarchy::build(3)?;
    let settings = SolverSettings::default();
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for i in 0..cfg.telescoping_samples as u64 {
        let Ok(s) = generate_sample(&case, &h, &settings, i)? else {
            continue;
        };
        checks += 1;
        let back = reconstruct(&s.corrections)?;
        let d = max_abs_diff(&back, &s.levels[2].u);
        worst = worst.max(d);
        if d > 1e-12 {
            failures += 1;
        }
    }
    Ok(suite("telescoping", checks, failures, worst))
}

fn adjoint_suite(cfg: &SmokeConfig) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xad01);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for k in 0..cfg.adjoint_pairs {
        let pair = shared_pair(GridLevel::new(1 + k % 3)?)?;
        let v: Vec<f64> = (0..pair.coarse.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..pair.fine.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pv = prolong(&v, &pair)?;
        let ptr = restrict_weighted(&r, &pair)?;
        let lhs: f64 = pv.iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(&ptr).map(|(a, b)| a * b).sum();
        let d = (lhs - rhs).abs();
        worst = worst.max(d);
        if d > 1e-12 {
            failures += 1;
        }
    }
    Ok(suite("adjoint", cfg.adjoint_pairs, failures, worst))
}

/// Runs every suite; suite failures are reported, not raised.
pub fn run_smoke(cfg: &SmokeConfig) -> Result<SmokeReport> {
    Ok(SmokeReport {
        suites: vec![
            oracle_suite(cfg)?,
            contraction_suite(cfg)?,
            safety_suite(cfg)?,
            telescoping_suite(cfg)?,
            adjoint_suite(cfg)?,
        ],
    })
}
