//! One PASS/FAIL line per acceptance criterion; exits non-zero when any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use obstacle_mg::fem::energy_norm;
use obstacle_mg::fields::{sample_params, Case, CaseConfig};
use obstacle_mg::grid::{GridHierarchy, GridLevel};
use obstacle_mg::multilevel::{generate_sample, reconstruct, SolverSettings};
use obstacle_mg::problem::Problem;
use obstacle_mg::smoother::{pr_solve, pr_step, OmegaStrategy, SolveControl};
use obstacle_mg::transfer::{prolong, restrict_monotone, RestrictionMode, TransferPair};
use obstacle_mg::vcmr::{active_set_oracle, build_stack, vcmr_solve, VcmrConfig};
use obstacle_mg_cli::execute;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    passed: bool,
    detail: String,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The first `count` case-1 instances on `level` with a positive coefficient.
fn case1_instances(level: usize, count: usize, seed: u64, forcing: Option<f64>) -> Vec<(u64, Problem)> {
    let mut cfg = CaseConfig::new(Case::DeterministicObstacle, 10, seed);
    cfg.forcing = forcing;
    let level = GridLevel::new(level).unwrap();
    (0u64..)
        .filter_map(|i| Problem::assemble(&cfg, &sample_params(&cfg, i).unwrap(), level).ok().map(|p| (i, p)))
        .take(count)
        .collect()
}

fn oracle_equivalence() -> Verdict {
    let h = GridHierarchy::build(1).unwrap();
    let control = SolveControl {
        tol: 1e-13,
        ..Default::default()
    };
    let mut detail = Vec::new();
    let mut passed = true;
    for (label, forcing) in [("default forcing", None), ("forcing -1", Some(-1.0))] {
        let worst = case1_instances(1, 100, 2024, forcing)
            .par_iter()
            .map(|(_, p)| {
                let exact = active_set_oracle(&p.operator, &p.rhs, &p.obstacle).unwrap();
                let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
                let pr = pr_solve(&p.operator, &p.rhs, &p.obstacle, stack.omega(1), &control).unwrap();
                let mg = vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-13).unwrap();
                max_diff(&pr.u, &exact).max(max_diff(&mg.u, &exact))
            })
            .reduce(|| 0.0, f64::max);
        passed &= worst <= 1e-8;
        detail.push(format!("{label}: max error {worst:.2e}"));
    }
    Verdict {
        passed,
        detail: format!("100 instances each, {} (tol 1e-8)", detail.join(", ")),
    }
}

fn contraction_law() -> Verdict {
    let h = GridHierarchy::build(2).unwrap();
    let results: Vec<(usize, f64, f64)> = case1_instances(2, 20, 77, None)
        .par_iter()
        .map(|(_, p)| {
            let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
            let omega = stack.omega(2);
            let reference = vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-13).unwrap().u;
            let err = |u: &[f64]| {
                let d: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
                energy_norm(&d, &p.operator).unwrap()
            };
            let mut u = p.obstacle.clone();
            let mut e = err(&u);
            let mut violations = 0;
            let mut worst_ratio: f64 = 0.0;
            for _ in 0..2000 {
                u = pr_step(&u, &p.operator, &p.rhs, &p.obstacle, omega).unwrap();
                let next = err(&u);
                if next > (1.0 - omega) * e + 1e-10 {
                    violations += 1;
                }
                if e > 1e-8 {
                    worst_ratio = worst_ratio.max(next / e);
                }
                e = next;
            }
            (violations, worst_ratio, 1.0 - omega)
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let bound = results.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Verdict {
        passed: violations == 0,
        detail: format!(
            "20 instances x 2000 steps, {violations} steps exceed (1-omega)+1e-10, worst ratio {worst:.4} vs 1-omega {bound:.4}"
        ),
    }
}

fn complementarity_audit() -> Verdict {
    let h = GridHierarchy::build(4).unwrap();
    let settings = SolverSettings::default();
    let mut passed = true;
    let mut detail = Vec::new();
    for case in [Case::DeterministicObstacle, Case::StochasticConstantObstacle, Case::RoughSurface] {
        let cfg = CaseConfig::new(case, 10, 5).resolved().unwrap();
        let audits: Vec<Option<f64>> = (0u64..8)
            .into_par_iter()
            .map(|i| {
                let p = Problem::assemble(&cfg, &sample_params(&cfg, i).unwrap(), h.finest()).ok()?;
                let stack = build_stack(&p.operator, &h, settings.vcmr.omega_strategy).unwrap();
                let out = vcmr_solve(&p.rhs, &p.obstacle, &stack, &settings.vcmr, settings.tol).unwrap();
                out.converged.then(|| out.audit.worst())
            })
            .collect();
        let converged: Vec<f64> = audits.into_iter().flatten().collect();
        let worst = converged.iter().cloned().fold(0.0, f64::max);
        passed &= !converged.is_empty() && worst <= 1e-8;
        detail.push(format!("case {} {} solves worst {worst:.2e}", case.number(), converged.len()));
    }
    Verdict {
        passed,
        detail: format!("L=4, {} (tol 1e-8)", detail.join(", ")),
    }
}

fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-(1i64 << 20)..=(1 << 20)) as f64 / (1u64 << 20) as f64
}

fn restriction_safety() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut detail = Vec::new();
    let mut passed = true;
    for mode in [RestrictionMode::ExactSupport, RestrictionMode::ThreeByThree] {
        let mut violations = 0;
        for t in 0..1000 {
            let pair = TransferPair::new(GridLevel::new(1 + t % 2).unwrap(), GridLevel::new(2 + t % 2).unwrap()).unwrap();
            let fine = pair.fine;
            let m = fine.interior_side();
            let n = fine.dof_count();
            let u: Vec<f64> = (0..n).map(|_| dyadic(&mut rng)).collect();
            let phi: Vec<f64> = (0..n)
                .map(|d| {
                    let idx = fine.node_of_dof(d);
                    let ring = idx.i == 1 || idx.j == 1 || idx.i == m || idx.j == m;
                    if t % 4 < 2 || ring {
                        u[d] - dyadic(&mut rng).abs()
                    } else {
                        dyadic(&mut rng)
                    }
                })
                .collect();
            let w: Vec<f64> = phi.iter().zip(&u).map(|(a, b)| a - b).collect();
            let e: Vec<f64> = restrict_monotone(&w, &pair, mode)
                .unwrap()
                .into_iter()
                .map(|b| if t % 2 == 0 { b } else { b + dyadic(&mut rng).abs() })
                .collect();
            let pe = prolong(&e, &pair).unwrap();
            violations += (0..n).filter(|&k| u[k] + pe[k] < phi[k]).count();
        }
        passed &= violations == 0;
        detail.push(format!("{mode:?} {violations} violations"));
    }
    Verdict {
        passed,
        detail: format!("1000 triples per mode, {}", detail.join(", ")),
    }
}

fn telescoping() -> Verdict {
    let cfg = CaseConfig::new(Case::DeterministicObstacle, 10, 31);
    let h = GridHierarchy::build(4).unwrap();
    let settings = SolverSettings::default();
    let mut errors = Vec::new();
    let mut next = 0u64;
    while errors.len() < 50 {
        let batch: Vec<u64> = (next..next + (50 - errors.len()) as u64).collect();
        next += batch.len() as u64;
        errors.extend(batch.par_iter().filter_map(|&i| {
            let s = generate_sample(&cfg, &h, &settings, i).unwrap().ok()?;
            Some(max_diff(&reconstruct(&s.corrections).unwrap(), &s.levels[3].u))
        }).collect::<Vec<_>>());
    }
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Verdict {
        passed: worst <= 1e-12,
        detail: format!("50 samples at L=4, max error {worst:.2e} (tol 1e-12)"),
    }
}

fn speedup() -> Verdict {
    let h = GridHierarchy::build(4).unwrap();
    let cfg = VcmrConfig::default();
    let control = SolveControl {
        tol: 1e-8,
        ..Default::default()
    };
    let counts: Vec<(usize, usize, bool)> = case1_instances(4, 10, 8, None)
        .par_iter()
        .map(|(_, p)| {
            let stack = build_stack(&p.operator, &h, cfg.omega_strategy).unwrap();
            let mg = vcmr_solve(&p.rhs, &p.obstacle, &stack, &cfg, 1e-8).unwrap();
            let pr = pr_solve(&p.operator, &p.rhs, &p.obstacle, stack.omega(4), &control).unwrap();
            (mg.cycles, pr.iterations, mg.converged && pr.converged)
        })
        .collect();
    let passed = counts.iter().all(|&(c, i, ok)| ok && 10 * c <= i);
    let worst = counts.iter().map(|&(c, i, _)| c as f64 / i as f64).fold(0.0, f64::max);
    Verdict {
        passed,
        detail: format!(
            "10 instances at L=4, cycles/iterations worst {worst:.4} (limit 0.1), e.g. {} cycles vs {} iterations",
            counts[0].0, counts[0].1
        ),
    }
}

fn fe_convergence(tmp: &Path) -> Verdict {
    let out = tmp.join("convergence");
    let code = execute([
        "obstacle-mg",
        "convergence",
        "--case",
        "1",
        "--levels",
        "5",
        "--ref-refine",
        "1",
        "--threads",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    if code != 0 {
        return Verdict {
            passed: false,
            detail: format!("convergence exited with {code}"),
        };
    }
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    let ratios: Vec<f64> = rows.as_array().unwrap()[2..5]
        .iter()
        .map(|r| r["h1_ratio"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let l2: Vec<f64> = rows.as_array().unwrap()[2..5]
        .iter()
        .map(|r| r["l2_ratio"].as_f64().unwrap_or(f64::NAN))
        .collect();
    Verdict {
        passed: ratios.iter().all(|r| (1.6..=2.4).contains(r)),
        detail: format!("H1 ratios for levels 3..5 {ratios:.3?} (range [1.6, 2.4]), L2 ratios {l2:.3?}"),
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(tmp: &Path) -> Verdict {
    let mut trees = Vec::new();
    for threads in ["1", "8"] {
        let out = tmp.join(format!("dataset_{threads}"));
        let code = execute([
            "obstacle-mg",
            "dataset",
            "--levels",
            "3",
            "--train",
            "16",
            "--validation",
            "4",
            "--test",
            "4",
            "--seed",
            "12",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        if code != 0 {
            return Verdict {
                passed: false,
                detail: format!("dataset with {threads} threads exited with {code}"),
            };
        }
        trees.push(read_tree(&out));
    }
    Verdict {
        passed: trees[0] == trees[1],
        detail: format!("{} files compared byte for byte", trees[0].len()),
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("oracle-equivalence", Box::new(oracle_equivalence)),
        ("contraction-law", Box::new(contraction_law)),
        ("complementarity-audit", Box::new(complementarity_audit)),
        ("monotone-restriction-safety", Box::new(restriction_safety)),
        ("telescoping-reconstruction", Box::new(telescoping)),
        ("multigrid-speedup", Box::new(speedup)),
        ("fe-convergence", Box::new(|| fe_convergence(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let v = check();
        if !v.passed {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1}s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
