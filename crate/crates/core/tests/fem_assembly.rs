use num_rational::Rational64 as Q;
use obstacle_mg::fem::{assemble_operator, assemble_rhs, mass_matrix, stiffness_matrix};
use obstacle_mg::fields::{FieldKind, NodalField};
use obstacle_mg::grid::GridLevel;
use proptest::prelude::*;

type Node = (i64, i64);

/// Both triangles of every cell, split along `(i,j)–(i+1,j+1)`.
fn cells(n: i64) -> Vec<[Node; 3]> {
    let mut t = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            t.push([(i, j), (i + 1, j), (i + 1, j + 1)]);
            t.push([(i, j), (i, j + 1), (i + 1, j + 1)]);
        }
    }
    t
}

/// `(|T|, ∇λ_a)` in exact arithmetic, with node `(i, j)` at `(i h, j h)`.
fn geometry(tri: &[Node; 3], n: i64) -> (Q, [[Q; 2]; 3]) {
    let h = Q::new(1, n - 1);
    let p = tri.map(|(i, j)| [h * i, h * j]);
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let grads = [0, 1, 2].map(|a| {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det]
    });
    let area = if det < Q::from(0) { -det } else { det } / 2;
    (area, grads)
}

fn dof(node: Node, n: i64) -> Option<usize> {
    let (i, j) = node;
    (i > 0 && j > 0 && i < n - 1 && j < n - 1).then(|| ((i - 1) * (n - 2) + (j - 1)) as usize)
}

fn dyadic_field(n: i64, seed: i64) -> Vec<Q> {
    (0..n * n).map(|k| Q::new(8 + (k * 5 + seed) % 11, 8)).collect()
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn rational_operator(kappa: &[Q], n: i64) -> Vec<Vec<Q>> {
    let m = ((n - 2) * (n - 2)) as usize;
    let mut a = vec![vec![Q::from(0); m]; m];
    for tri in cells(n) {
        let (area, g) = geometry(&tri, n);
        let mean = tri.iter().map(|&(i, j)| kappa[(i * n + j) as usize]).sum::<Q>() / 3;
        for x in 0..3 {
            for y in 0..3 {
                if let (Some(r), Some(c)) = (dof(tri[x], n), dof(tri[y], n)) {
                    a[r][c] += area * mean * (g[x][0] * g[y][0] + g[x][1] * g[y][1]);
                }
            }
        }
    }
    a
}

#[test]
fn p1_coefficient_assembly_matches_exact_integration() {
    let level = GridLevel::new(1).unwrap();
    let n = level.nodes_per_side() as i64;
    let kq = dyadic_field(n, 3);
    let kappa = NodalField {
        values: kq.iter().map(|&q| to_f64(q)).collect(),
        kind: FieldKind::Coefficient,
        level,
    };
    let exact = rational_operator(&kq, n);
    let a = assemble_operator(&kappa, level).unwrap().matrix.to_dense();
    for (r, row) in exact.iter().enumerate() {
        for (c, &q) in row.iter().enumerate() {
            let want = to_f64(q);
            assert!((a[r][c] - want).abs() <= 1e-14 * want.abs().max(1.0), "({r},{c}) {} vs {want}", a[r][c]);
        }
    }
}

#[test]
fn p1_forcing_load_matches_exact_integration() {
    let level = GridLevel::new(1).unwrap();
    let n = level.nodes_per_side() as i64;
    let fq = dyadic_field(n, 7);
    let f = NodalField {
        values: fq.iter().map(|&q| to_f64(q)).collect(),
        kind: FieldKind::Forcing,
        level,
    };
    let mut exact = vec![Q::from(0); ((n - 2) * (n - 2)) as usize];
    for tri in cells(n) {
        let (area, _) = geometry(&tri, n);
        let vals = tri.map(|(i, j)| fq[(i * n + j) as usize]);
        for a in 0..3 {
            if let Some(r) = dof(tri[a], n) {
                // ∫_T f λ_a = |T| (2 f_a + f_b + f_c) / 12 for linear f
                exact[r] += area * (vals[a] * 2 + vals[(a + 1) % 3] + vals[(a + 2) % 3]) / 12;
            }
        }
    }
    let got = assemble_rhs(&f, level).unwrap();
    for (g, q) in got.iter().zip(&exact) {
        assert!((g - to_f64(*q)).abs() <= 1e-15);
    }
}

#[test]
fn triangle_areas_sum_to_one() {
    for n in [6i64, 11, 21] {
        let total: Q = cells(n).iter().map(|t| geometry(t, n).0).sum();
        assert_eq!(total, Q::from(1));
    }
}

#[test]
fn unit_mass_and_stiffness_stencils() {
    let level = GridLevel::new(2).unwrap();
    let h2 = level.spacing().powi(2);
    let s = stiffness_matrix(level);
    let m = mass_matrix(level);
    let c = level.dof_of(5, 5).unwrap();
    assert!((s.get(c, c) - 4.0).abs() < 1e-12);
    assert!((m.get(c, c) - h2 / 2.0).abs() < 1e-15);
    for (di, dj) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
        let nb = level.dof_of((5 + di) as usize, (5 + dj) as usize).unwrap();
        assert!((s.get(c, nb) + 1.0).abs() < 1e-12);
        assert!((m.get(c, nb) - h2 / 12.0).abs() < 1e-15);
    }
    let ne = level.dof_of(6, 6).unwrap();
    assert!(s.get(c, ne).abs() < 1e-12);
    assert!((m.get(c, ne) - h2 / 12.0).abs() < 1e-15);
    assert_eq!(m.get(c, level.dof_of(6, 4).unwrap()), 0.0);
}

fn field(level: GridLevel, values: Vec<f64>) -> NodalField {
    NodalField {
        values,
        kind: FieldKind::Coefficient,
        level,
    }
}

proptest! {
    #[test]
    fn energy_is_monotone_in_the_coefficient(
        base in prop::collection::vec(0.1f64..2.0, 36),
        bump in prop::collection::vec(0.0f64..1.0, 36),
        v in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let level = GridLevel::new(1).unwrap();
        let k2: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let a1 = assemble_operator(&field(level, base), level).unwrap();
        let a2 = assemble_operator(&field(level, k2), level).unwrap();
        let e1 = a1.matrix.quadratic_form(&v).unwrap();
        let e2 = a2.matrix.quadratic_form(&v).unwrap();
        prop_assert!(e1 <= e2 + 1e-12 * e2.abs().max(1.0));
    }

    #[test]
    fn energy_is_bounded_by_coefficient_range(
        kappa in prop::collection::vec(0.2f64..3.0, 121),
        v in prop::collection::vec(-1.0f64..1.0, 81),
    ) {
        let level = GridLevel::new(2).unwrap();
        let lo = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = kappa.iter().cloned().fold(0.0, f64::max);
        let a = assemble_operator(&field(level, kappa), level).unwrap();
        let e = a.matrix.quadratic_form(&v).unwrap();
        let s = stiffness_matrix(level).quadratic_form(&v).unwrap();
        prop_assert!(lo * s <= e * (1.0 + 1e-12));
        prop_assert!(e <= hi * s * (1.0 + 1e-12));
    }

    #[test]
    fn assembly_is_bitwise_reproducible(kappa in prop::collection::vec(0.2f64..3.0, 36)) {
        let level = GridLevel::new(1).unwrap();
        let a = assemble_operator(&field(level, kappa.clone()), level).unwrap();
        let b = assemble_operator(&field(level, kappa), level).unwrap();
        prop_assert_eq!(a.matrix.to_coordinate_text(), b.matrix.to_coordinate_text());
    }
}
