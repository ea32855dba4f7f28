//! P1 assembly on the Courant triangulation with homogeneous Dirichlet data
//! eliminated: operators act on interior dofs only.
//!
//! The coefficient enters through its P1 interpolant, so each triangle
//! contributes `|T|·κ̄_T·⟨∇λ_i, ∇λ_j⟩` with `κ̄_T` the mean of the three vertex
//! values, which integrates `κ_h` exactly against the constant gradients.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{check_len, Error, Result};
use crate::fields::NodalField;
use crate::grid::GridLevel;
use crate::sparse::CsrMatrix;

/// Coefficient vector over the interior dofs of one level.
pub type DofVector = Vec<f64>;

/// A symmetric operator on the interior dofs of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub matrix: CsrMatrix,
    pub level: GridLevel,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &[f64]) -> Result<DofVector> {
        self.matrix.mul_vec(v)
    }
}

struct Element {
    nodes: [usize; 3],
    area: f64,
    grads: [[f64; 2]; 3],
}

fn elements(level: GridLevel) -> Vec<Element> {
    let n = level.nodes_per_side();
    level
        .triangles()
        .into_iter()
        .map(|nodes| {
            let p = nodes.map(|v| level.coords_unchecked(v / n, v % n));
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let grads = [0, 1, 2].map(|a| {
                let b = (a + 1) % 3;
                let c = (a + 2) % 3;
                [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det]
            });
            Element {
                nodes,
                area: 0.5 * det.abs(),
                grads,
            }
        })
        .collect()
}

fn dof_map(level: GridLevel) -> Vec<Option<usize>> {
    let n = level.nodes_per_side();
    (0..level.node_count()).map(|k| level.dof_of(k / n, k % n)).collect()
}

fn assemble_with(level: GridLevel, local: impl Fn(&Element, usize, usize) -> f64) -> CsrMatrix {
    let dofs = dof_map(level);
    let mut t = Vec::with_capacity(18 * level.node_count());
    for e in elements(level) {
        for a in 0..3 {
            let Some(r) = dofs[e.nodes[a]] else { continue };
            for b in 0..3 {
                if let Some(c) = dofs[e.nodes[b]] {
                    t.push((r, c, local(&e, a, b)));
                }
            }
        }
    }
    CsrMatrix::from_triplets(level.dof_count(), level.dof_count(), &t)
}

fn check_field_level(field: &NodalField, level: GridLevel) -> Result<()> {
    if field.level != level {
        return Err(Error::LevelMismatch {
            expected: level.level(),
            got: field.level.level(),
        });
    }
    check_len(level.node_count(), field.values.len())
}

/// Stiffness operator `A_y` of the nodal coefficient `kappa`.
pub fn assemble_operator(kappa: &NodalField, level: GridLevel) -> Result<SparseOperator> {
    check_field_level(kappa, level)?;
    if let Some((node, &value)) = kappa
        .values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::DegenerateCoefficient { node, value });
    }
    let k = &kappa.values;
    let matrix = assemble_with(level, |e, a, b| {
        let mean = (k[e.nodes[0]] + k[e.nodes[1]] + k[e.nodes[2]]) / 3.0;
        let g = &e.grads;
        e.area * mean * (g[a][0] * g[b][0] + g[a][1] * g[b][1])
    });
    Ok(SparseOperator { matrix, level })
}

/// Tested right-hand side `f_i = ∫ f λ_i` with the vertex rule
/// `∫_T f λ_i ≈ |T|(2f_i + f_j + f_k)/12`, exact for P1 data.
pub fn assemble_rhs(f: &NodalField, level: GridLevel) -> Result<DofVector> {
    check_field_level(f, level)?;
    let dofs = dof_map(level);
    let mut out = vec![0.0; level.dof_count()];
    for e in elements(level) {
        let vals = e.nodes.map(|v| f.values[v]);
        let total: f64 = vals.iter().sum();
        for a in 0..3 {
            if let Some(r) = dofs[e.nodes[a]] {
                out[r] += e.area * (vals[a] + total) / 12.0;
            }
        }
    }
    Ok(out)
}

/// Exact P1 mass matrix on the interior dofs.
pub fn mass_matrix(level: GridLevel) -> CsrMatrix {
    assemble_with(level, |e, a, b| e.area * if a == b { 2.0 } else { 1.0 } / 12.0)
}

/// Stiffness matrix of `κ ≡ 1`.
pub fn stiffness_matrix(level: GridLevel) -> CsrMatrix {
    assemble_with(level, |e, a, b| {
        let g = &e.grads;
        e.area * (g[a][0] * g[b][0] + g[a][1] * g[b][1])
    })
}

/// Mass and unit-stiffness matrices of one level.
#[derive(Debug)]
pub struct NormForms {
    pub level: GridLevel,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl NormForms {
    pub fn new(level: GridLevel) -> Self {
        NormForms {
            level,
            mass: mass_matrix(level),
            stiffness: stiffness_matrix(level),
        }
    }

    pub fn l2_norm(&self, v: &[f64]) -> Result<f64> {
        Ok(self.mass.quadratic_form(v)?.max(0.0).sqrt())
    }

    /// `|v|_{H¹}`, the gradient part only.
    pub fn h1_seminorm(&self, v: &[f64]) -> Result<f64> {
        Ok(self.stiffness.quadratic_form(v)?.max(0.0).sqrt())
    }

    pub fn h1_norm(&self, v: &[f64]) -> Result<f64> {
        let m = self.mass.quadratic_form(v)?;
        let s = self.stiffness.quadratic_form(v)?;
        Ok((m + s).max(0.0).sqrt())
    }
}

/// Cached [`NormForms`] of a level; built once per level and process.
pub fn norm_forms(level: GridLevel) -> Arc<NormForms> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NormForms>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(f) = cache.lock().expect("norm cache lock").get(&level.level()) {
        return Arc::clone(f);
    }
    let forms = Arc::new(NormForms::new(level));
    cache
        .lock()
        .expect("norm cache lock")
        .entry(level.level())
        .or_insert(forms)
        .clone()
}

pub fn l2_norm(v: &[f64], level: GridLevel) -> Result<f64> {
    norm_forms(level).l2_norm(v)
}

pub fn h1_norm(v: &[f64], level: GridLevel) -> Result<f64> {
    norm_forms(level).h1_norm(v)
}

/// `‖v‖_A = sqrt(vᵀ A v)`.
pub fn energy_norm(v: &[f64], a: &SparseOperator) -> Result<f64> {
    Ok(a.matrix.quadratic_form(v)?.max(0.0).sqrt())
}

/// Gershgorin upper bound on the largest eigenvalue.
pub fn sigma_max_bound(a: &SparseOperator) -> f64 {
    a.matrix.max_abs_row_sum()
}

/// Rayleigh-quotient estimate of the largest eigenvalue after `steps` power
/// iterations from a fixed start vector. Never exceeds the true value.
pub fn power_iteration(a: &CsrMatrix, steps: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..steps.max(1) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        a.mul_vec_into(&v, &mut w);
        estimate = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        std::mem::swap(&mut v, &mut w);
    }
    estimate
}
