use nalgebra::{DMatrix, SymmetricEigen};
use obstacle_mg::fem::{assemble_operator, energy_norm, SparseOperator};
use obstacle_mg::fields::{sample_params, Case, CaseConfig, FieldKind, NodalField};
use obstacle_mg::grid::{GridHierarchy, GridLevel};
use obstacle_mg::problem::Problem;
use obstacle_mg::smoke::richardson_energy_norm;
use obstacle_mg::smoother::{choose_omega, pr_solve, pr_step, OmegaStrategy, SolveControl};
use obstacle_mg::vcmr::{active_set_oracle, build_stack, complementarity_residual, vcmr_cycle, vcmr_solve, VcmrConfig};
use proptest::prelude::*;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn try_instance(levels: usize, index: u64, forcing: Option<f64>) -> Option<(Problem, GridHierarchy)> {
    let mut cfg = CaseConfig::new(Case::DeterministicObstacle, 10, 42);
    cfg.forcing = forcing;
    let h = GridHierarchy::build(levels).unwrap();
    let p = Problem::assemble(&cfg, &sample_params(&cfg, index).unwrap(), h.finest()).ok()?;
    Some((p, h))
}

fn instance(levels: usize, index: u64, forcing: Option<f64>) -> (Problem, GridHierarchy) {
    try_instance(levels, index, forcing).expect("positive coefficient")
}

fn tight(tol: f64) -> SolveControl {
    SolveControl {
        tol,
        ..Default::default()
    }
}

#[test]
fn richardson_norm_matches_unit_spectrum() {
    let level = GridLevel::new(2).unwrap();
    let a = assemble_operator(&NodalField::constant(level, FieldKind::Coefficient, 1.0), level).unwrap();
    let h = level.spacing();
    let m = level.interior_side();
    let omega = choose_omega(&a, OmegaStrategy::Gershgorin).unwrap();
    assert!((omega - 0.125).abs() < 1e-15);
    let mut want: f64 = 0.0;
    for j in 1..=m {
        for k in 1..=m {
            let s = 4.0 - 2.0 * (j as f64 * std::f64::consts::PI * h).cos() - 2.0 * (k as f64 * std::f64::consts::PI * h).cos();
            want = want.max((1.0 - omega * s).abs());
        }
    }
    assert!((richardson_energy_norm(&a, omega) - want).abs() < 1e-12);
}

fn iteration_norm(a: &SparseOperator, omega: f64) -> f64 {
    let n = a.dim();
    let dense = DMatrix::from_fn(n, n, |r, c| a.matrix.get(r, c));
    let eig = SymmetricEigen::new(dense);
    eig.eigenvalues.iter().map(|s| (1.0 - omega * s).abs()).fold(0.0, f64::max)
}

#[test]
fn projected_richardson_contracts_at_the_iteration_norm() {
    for index in 0..3 {
        for forcing in [None, Some(-1.0)] {
            let (p, h) = instance(2, index, forcing);
            let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
            let omega = stack.omega(2);
            let rate = iteration_norm(&p.operator, omega);
            assert!(rate < 1.0 && rate > 1.0 - omega);
            let reference = vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-13).unwrap().u;
            let err = |u: &[f64]| {
                let d: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
                energy_norm(&d, &p.operator).unwrap()
            };
            let mut u = p.obstacle.clone();
            let mut e = err(&u);
            for _ in 0..200 {
                u = pr_step(&u, &p.operator, &p.rhs, &p.obstacle, omega).unwrap();
                let next = err(&u);
                assert!(next <= rate * e + 1e-10, "{next} > {rate} * {e}");
                e = next;
            }
        }
    }
}

#[test]
fn oracle_solution_is_a_fixed_point() {
    for forcing in [None, Some(-1.0), Some(-5.0)] {
        let (p, h) = instance(1, 3, forcing);
        let u = active_set_oracle(&p.operator, &p.rhs, &p.obstacle).unwrap();
        let omega = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap().omega(1);
        let next = pr_step(&u, &p.operator, &p.rhs, &p.obstacle, omega).unwrap();
        assert!(max_diff(&u, &next) <= 1e-12);
    }
}

#[test]
fn limit_does_not_depend_on_omega() {
    let tol = 1e-10;
    for forcing in [None, Some(-1.0)] {
        let (p, h) = instance(3, 1, forcing);
        let mut solutions = Vec::new();
        for strategy in [OmegaStrategy::Gershgorin, OmegaStrategy::PowerIterationSafeguarded] {
            let stack = build_stack(&p.operator, &h, strategy).unwrap();
            let cfg = VcmrConfig {
                omega_strategy: strategy,
                ..Default::default()
            };
            let out = vcmr_solve(&p.rhs, &p.obstacle, &stack, &cfg, tol).unwrap();
            assert!(out.converged);
            solutions.push(out.u);
        }
        assert!(max_diff(&solutions[0], &solutions[1]) <= 10.0 * tol);
    }
}

#[test]
fn solver_family_agrees_under_contact() {
    for index in 0..6 {
        for forcing in [None, Some(-1.0), Some(-5.0)] {
            let (p, h) = instance(1, index, forcing);
            let exact = active_set_oracle(&p.operator, &p.rhs, &p.obstacle).unwrap();
            let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
            let pr = pr_solve(&p.operator, &p.rhs, &p.obstacle, stack.omega(1), &tight(1e-13)).unwrap();
            let mg = vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-13).unwrap();
            assert!(pr.converged && mg.converged);
            assert!(max_diff(&pr.u, &exact) <= 1e-8);
            assert!(max_diff(&mg.u, &exact) <= 1e-8);
        }
    }
}

#[test]
fn coarse_correction_keeps_feasibility_without_post_smoothing() {
    let (p, h) = instance(3, 2, Some(-1.0));
    let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
    let cfg = VcmrConfig {
        pre_smooth: 1,
        post_smooth: 0,
        ..Default::default()
    };
    let mut u = vec![1.0; p.obstacle.len()];
    for _ in 0..5 {
        u = vcmr_cycle(&u, &p.rhs, &p.obstacle, 3, &stack, &cfg).unwrap();
        assert!(u.iter().zip(&p.obstacle).all(|(a, b)| a >= b));
    }
}

#[test]
fn cycles_are_bitwise_deterministic() {
    let (p, h) = instance(3, 4, Some(-1.0));
    let run = || {
        let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
        vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-10).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.u, b.u);
    assert_eq!(a.history, b.history);
}

#[test]
fn converged_solves_pass_the_audit_in_every_case() {
    for case in [Case::DeterministicObstacle, Case::StochasticConstantObstacle, Case::RoughSurface] {
        let mut cfg = CaseConfig::new(case, 10, 3);
        cfg.wave_cutoff = 8.0;
        let cfg = cfg.resolved().unwrap();
        let h = GridHierarchy::build(3).unwrap();
        let p = Problem::assemble(&cfg, &sample_params(&cfg, 0).unwrap(), h.finest()).unwrap();
        let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
        let out = vcmr_solve(&p.rhs, &p.obstacle, &stack, &VcmrConfig::default(), 1e-9).unwrap();
        assert!(out.converged);
        let audit = complementarity_residual(&out.u, &p.operator, &p.rhs, &p.obstacle).unwrap();
        assert_eq!(audit, out.audit);
        assert!(audit.worst() <= 1e-8, "{case:?}: {audit:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_step_is_feasible(index in 0u64..1000, u in prop::collection::vec(-1.0f64..1.0, 16), forcing in -5.0f64..5.0) {
        let inst = try_instance(1, index, Some(forcing));
        prop_assume!(inst.is_some());
        let (p, h) = inst.unwrap();
        let omega = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap().omega(1);
        let next = pr_step(&u, &p.operator, &p.rhs, &p.obstacle, omega).unwrap();
        prop_assert!(next.iter().zip(&p.obstacle).all(|(a, b)| a >= b));
    }

    #[test]
    fn cycle_output_is_feasible(index in 0u64..1000, u in prop::collection::vec(-1.0f64..1.0, 81), forcing in -5.0f64..5.0) {
        let inst = try_instance(2, index, Some(forcing));
        prop_assume!(inst.is_some());
        let (p, h) = inst.unwrap();
        let stack = build_stack(&p.operator, &h, OmegaStrategy::Gershgorin).unwrap();
        let next = vcmr_cycle(&u, &p.rhs, &p.obstacle, 2, &stack, &VcmrConfig::default()).unwrap();
        prop_assert!(next.iter().zip(&p.obstacle).all(|(a, b)| a >= b));
    }
}
