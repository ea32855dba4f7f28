//! Transfer between consecutive levels.
//!
//! The prolongation `P` is the matrix of the embedding `V_ℓ ⊂ V_{ℓ+1}`: a fine
//! node that coincides with a coarse node copies its value, a fine node at the
//! midpoint of a coarse edge (horizontal, vertical or the mesh diagonal)
//! averages the two endpoints. Boundary values are the Dirichlet zero.
//!
//! The monotone restriction takes, for every coarse dof, the maximum of a
//! fine field over the fine nodes whose hats lie inside the coarse hat. On
//! this mesh those are the coincident node and its six stencil neighbours.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{DofVector, SparseOperator};
use crate::grid::GridLevel;
use crate::sparse::CsrMatrix;

/// Candidate set used by [`restrict_monotone`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionMode {
    /// The seven fine nodes with hat support inside the coarse hat.
    #[default]
    ExactSupport,
    /// The full 3×3 fine neighbourhood.
    ThreeByThree,
}

impl RestrictionMode {
    fn offsets(self) -> &'static [(isize, isize)] {
        const EXACT: [(isize, isize); 7] = [(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1)];
        const FULL: [(isize, isize); 9] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 0),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            RestrictionMode::ExactSupport => &EXACT,
            RestrictionMode::ThreeByThree => &FULL,
        }
    }
}

/// Prolongation between a coarse level and the next finer one, with its
/// transpose kept alongside.
#[derive(Debug, Clone)]
pub struct TransferPair {
    pub coarse: GridLevel,
    pub fine: GridLevel,
    /// Interior-fine × interior-coarse.
    pub prolongation: CsrMatrix,
    pub restriction: CsrMatrix,
}

impl TransferPair {
    pub fn new(coarse: GridLevel, fine: GridLevel) -> Result<Self> {
        if fine.level() != coarse.level() + 1 {
            return Err(Error::LevelMismatch {
                expected: coarse.level() + 1,
                got: fine.level(),
            });
        }
        let mut t = Vec::with_capacity(2 * fine.dof_count());
        for row in 0..fine.dof_count() {
            let idx = fine.node_of_dof(row);
            let (fi, fj) = (idx.i, idx.j);
            // coarse endpoints of the edge (or the node) this fine node sits on
            let ends: [(usize, usize); 2] = match (fi % 2, fj % 2) {
                (0, 0) => [(fi / 2, fj / 2); 2],
                (1, 0) => [((fi - 1) / 2, fj / 2), ((fi + 1) / 2, fj / 2)],
                (0, 1) => [(fi / 2, (fj - 1) / 2), (fi / 2, (fj + 1) / 2)],
                _ => [((fi - 1) / 2, (fj - 1) / 2), ((fi + 1) / 2, (fj + 1) / 2)],
            };
            if ends[0] == ends[1] {
                if let Some(c) = coarse.dof_of(ends[0].0, ends[0].1) {
                    t.push((row, c, 1.0));
                }
            } else {
                for (ci, cj) in ends {
                    if let Some(c) = coarse.dof_of(ci, cj) {
                        t.push((row, c, 0.5));
                    }
                }
            }
        }
        let prolongation = CsrMatrix::from_triplets(fine.dof_count(), coarse.dof_count(), &t);
        let restriction = prolongation.transpose();
        Ok(TransferPair {
            coarse,
            fine,
            prolongation,
            restriction,
        })
    }
}

/// Cached pair between `coarse` and the next finer level.
pub fn shared_pair(coarse: GridLevel) -> Result<Arc<TransferPair>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<TransferPair>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("transfer cache lock").get(&coarse.level()) {
        return Ok(Arc::clone(p));
    }
    let pair = Arc::new(TransferPair::new(coarse, GridLevel::new(coarse.level() + 1)?)?);
    Ok(cache
        .lock()
        .expect("transfer cache lock")
        .entry(coarse.level())
        .or_insert(pair)
        .clone())
}

/// `P v` for a coarse dof vector.
pub fn prolong(v: &[f64], pair: &TransferPair) -> Result<DofVector> {
    check_len(pair.coarse.dof_count(), v.len())?;
    pair.prolongation.mul_vec(v)
}

/// Embedding of a full-grid coarse array (boundary included) into the fine
/// grid. Unlike [`prolong`] this keeps nonzero boundary values.
pub fn prolong_full(values: &[f64], pair: &TransferPair) -> Result<Vec<f64>> {
    let (c, f) = (pair.coarse, pair.fine);
    check_len(c.node_count(), values.len())?;
    let (nc, nf) = (c.nodes_per_side(), f.nodes_per_side());
    let at = |i: usize, j: usize| values[i * nc + j];
    let mut out = vec![0.0; f.node_count()];
    for fi in 0..nf {
        for fj in 0..nf {
            out[fi * nf + fj] = match (fi % 2, fj % 2) {
                (0, 0) => at(fi / 2, fj / 2),
                (1, 0) => 0.5 * (at((fi - 1) / 2, fj / 2) + at((fi + 1) / 2, fj / 2)),
                (0, 1) => 0.5 * (at(fi / 2, (fj - 1) / 2) + at(fi / 2, (fj + 1) / 2)),
                _ => 0.5 * (at((fi - 1) / 2, (fj - 1) / 2) + at((fi + 1) / 2, (fj + 1) / 2)),
            };
        }
    }
    Ok(out)
}

/// `Pᵀ r` for a fine dof vector.
pub fn restrict_weighted(r: &[f64], pair: &TransferPair) -> Result<DofVector> {
    check_len(pair.fine.dof_count(), r.len())?;
    pair.restriction.mul_vec(r)
}

/// Galerkin coarse operator `Pᵀ A P`, exactly symmetric.
pub fn galerkin_coarse(a: &SparseOperator, pair: &TransferPair) -> Result<SparseOperator> {
    if a.level != pair.fine {
        return Err(Error::LevelMismatch {
            expected: pair.fine.level(),
            got: a.level.level(),
        });
    }
    let mut matrix = pair.restriction.matmul(&a.matrix.matmul(&pair.prolongation));
    matrix.symmetrize_from_upper();
    Ok(SparseOperator {
        matrix,
        level: pair.coarse,
    })
}

/// Monotone restriction `(R^max w)_i = max { w_j : supp λ_j^fine ⊂ supp λ_i^coarse }`.
/// Fine boundary nodes contribute the Dirichlet value 0.
pub fn restrict_monotone(w: &[f64], pair: &TransferPair, mode: RestrictionMode) -> Result<DofVector> {
    check_len(pair.fine.dof_count(), w.len())?;
    let (c, f) = (pair.coarse, pair.fine);
    let offsets = mode.offsets();
    let out = (0..c.dof_count())
        .map(|d| {
            let idx = c.node_of_dof(d);
            let (ci, cj) = (2 * idx.i as isize, 2 * idx.j as isize);
            offsets
                .iter()
                .map(|&(di, dj)| f.dof_of_signed(ci + di, cj + dj).map_or(0.0, |k| w[k]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_operator;
    use crate::grid::STENCIL_OFFSETS;
    use crate::fields::{FieldKind, NodalField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(coarse: usize) -> TransferPair {
        TransferPair::new(GridLevel::new(coarse).unwrap(), GridLevel::new(coarse + 1).unwrap()).unwrap()
    }

    #[test]
    fn prolongation_rows() {
        let p = pair(1);
        for r in 0..p.fine.dof_count() {
            let entries: Vec<_> = p.prolongation.row(r).collect();
            assert!(entries.len() <= 2);
            let idx = p.fine.node_of_dof(r);
            if idx.i % 2 == 0 && idx.j % 2 == 0 {
                assert_eq!(entries.len(), 1);
                assert_eq!(entries[0].1, 1.0);
            } else {
                assert!(entries.iter().all(|e| e.1 == 0.5));
            }
        }
        assert!(TransferPair::new(GridLevel::new(1).unwrap(), GridLevel::new(3).unwrap()).is_err());
    }

    #[test]
    fn full_grid_constants_are_preserved() {
        let p = pair(2);
        let ones = vec![1.0; p.coarse.node_count()];
        assert!(prolong_full(&ones, &p).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn coarse_hat_prolongs_to_fine_hat() {
        let p = pair(1);
        let (ci, cj) = (2, 2);
        let mut v = vec![0.0; p.coarse.dof_count()];
        v[p.coarse.dof_of(ci, cj).unwrap()] = 1.0;
        let fine = prolong(&v, &p).unwrap();
        let (fi, fj) = (2 * ci, 2 * cj);
        let mut expected = vec![0.0; p.fine.dof_count()];
        expected[p.fine.dof_of(fi, fj).unwrap()] = 1.0;
        for (di, dj) in STENCIL_OFFSETS {
            let k = p.fine.dof_of((fi as isize + di) as usize, (fj as isize + dj) as usize).unwrap();
            expected[k] = 0.5;
        }
        assert_eq!(fine, expected);
        assert!(prolong(&vec![0.0; p.coarse.dof_count()], &p).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adjoint_identity() {
        let p = pair(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let v: Vec<f64> = (0..p.coarse.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..p.fine.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pv = prolong(&v, &p).unwrap();
            let ptr = restrict_weighted(&r, &p).unwrap();
            let lhs: f64 = pv.iter().zip(&r).map(|(a, b)| a * b).sum();
            let rhs: f64 = v.iter().zip(&ptr).map(|(a, b)| a * b).sum();
            worst = worst.max((lhs - rhs).abs());
        }
        assert!(worst <= 1e-12, "adjoint deviation {worst}");
    }

    #[test]
    fn weighted_restriction_of_unit_vectors() {
        let p = pair(1);
        let mut r = vec![0.0; p.fine.dof_count()];
        r[p.fine.dof_of(4, 4).unwrap()] = 1.0;
        let c = restrict_weighted(&r, &p).unwrap();
        let mut e = vec![0.0; p.coarse.dof_count()];
        e[p.coarse.dof_of(2, 2).unwrap()] = 1.0;
        assert_eq!(c, e);

        // diagonal midpoint between coarse (1,1) and (2,2)
        let mut r = vec![0.0; p.fine.dof_count()];
        r[p.fine.dof_of(3, 3).unwrap()] = 1.0;
        let c = restrict_weighted(&r, &p).unwrap();
        let mut e = vec![0.0; p.coarse.dof_count()];
        e[p.coarse.dof_of(1, 1).unwrap()] = 0.5;
        e[p.coarse.dof_of(2, 2).unwrap()] = 0.5;
        assert_eq!(c, e);
    }

    #[test]
    fn galerkin_product() {
        let p = pair(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kappa = NodalField {
            values: (0..p.fine.node_count()).map(|_| rng.random_range(0.5..2.0)).collect(),
            kind: FieldKind::Coefficient,
            level: p.fine,
        };
        let a = assemble_operator(&kappa, p.fine).unwrap();
        let ac = galerkin_coarse(&a, &p).unwrap();
        assert!(ac.matrix.is_symmetric());
        assert_eq!(ac.level, p.coarse);
        for _ in 0..20 {
            let v: Vec<f64> = (0..p.coarse.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = ac.matrix.quadratic_form(&v).unwrap();
            let pv = prolong(&v, &p).unwrap();
            let rhs = a.matrix.quadratic_form(&pv).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
            assert!(lhs > 0.0);
        }
        assert!(galerkin_coarse(&ac, &p).is_err());
    }

    #[test]
    fn galerkin_of_unit_operator_matches_rediscretization() {
        let p = pair(1);
        let unit = |l| assemble_operator(&NodalField::constant(l, FieldKind::Coefficient, 1.0), l).unwrap();
        let ac = galerkin_coarse(&unit(p.fine), &p).unwrap();
        let direct = unit(p.coarse);
        for r in 0..direct.dim() {
            for (c, v) in direct.matrix.row(r) {
                assert!((ac.matrix.get(r, c) - v).abs() < 1e-12);
            }
        }
        assert!(crate::fem::sigma_max_bound(&ac).is_finite());
    }

    #[test]
    fn monotone_restriction_of_constants() {
        let p = pair(2);
        let w = vec![-0.3; p.fine.dof_count()];
        for mode in [RestrictionMode::ExactSupport, RestrictionMode::ThreeByThree] {
            assert!(restrict_monotone(&w, &p, mode).unwrap().iter().all(|&x| x == -0.3));
        }
    }

    #[test]
    fn spike_on_diagonal_neighbour() {
        let p = pair(1);
        let (ci, cj) = (2, 2);
        let mut w = vec![0.0; p.fine.dof_count()];
        // NE neighbour of the coincident fine node
        w[p.fine.dof_of(2 * ci + 1, 2 * cj + 1).unwrap()] = 5.0;
        let r = restrict_monotone(&w, &p, RestrictionMode::ExactSupport).unwrap();
        assert_eq!(r[p.coarse.dof_of(ci, cj).unwrap()], 5.0);
        // the NW neighbour is outside the coarse hexagon
        let mut w = vec![-1.0; p.fine.dof_count()];
        w[p.fine.dof_of(2 * ci + 1, 2 * cj - 1).unwrap()] = 5.0;
        let exact = restrict_monotone(&w, &p, RestrictionMode::ExactSupport).unwrap();
        let full = restrict_monotone(&w, &p, RestrictionMode::ThreeByThree).unwrap();
        assert_eq!(exact[p.coarse.dof_of(ci, cj).unwrap()], -1.0);
        assert_eq!(full[p.coarse.dof_of(ci, cj).unwrap()], 5.0);
    }

    #[test]
    fn three_by_three_dominates_exact() {
        let p = pair(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let w: Vec<f64> = (0..p.fine.dof_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e = restrict_monotone(&w, &p, RestrictionMode::ExactSupport).unwrap();
            let f = restrict_monotone(&w, &p, RestrictionMode::ThreeByThree).unwrap();
            assert!(e.iter().zip(&f).all(|(a, b)| a <= b));
            // the coincident node is always a candidate
            for d in 0..p.coarse.dof_count() {
                let idx = p.coarse.node_of_dof(d);
                assert!(e[d] >= w[p.fine.dof_of(2 * idx.i, 2 * idx.j).unwrap()]);
            }
        }
    }
}
