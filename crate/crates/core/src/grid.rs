//! Nested uniform triangulations of the unit square.
//!
//! Level `ℓ` (1-based) has `n = 5·2^(ℓ−1) + 1` nodes per side and spacing
//! `h = 1/(n − 1)`. Every grid square `(i, j)–(i+1, j+1)` is split along the
//! diagonal from `(i, j)` to `(i+1, j+1)`, identically on all levels, so an
//! interior node touches exactly six triangles and has the stencil neighbours
//! E, W, N, S, NE and SW.
//!
//! Nodes are flattened row-major, `i·n + j`, with row `i` along `x₂` and column
//! `j` along `x₁`. Degrees of freedom are the interior nodes only, flattened
//! row-major over the `(n − 2)²` interior block.

use crate::error::{Error, Result};

/// Largest supported level count.
pub const MAX_LEVELS: usize = 12;

/// Offsets `(di, dj)` of the six stencil neighbours on the Courant mesh.
pub const STENCIL_OFFSETS: [(isize, isize); 6] = [(0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1)];

/// One uniform grid of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridLevel {
    level: usize,
    n: usize,
}

/// A node position on a level, as row `i` and column `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeIndex {
    pub i: usize,
    pub j: usize,
}

impl NodeIndex {
    pub fn new(i: usize, j: usize) -> Self {
        NodeIndex { i, j }
    }

    pub fn flattened(self, nodes_per_side: usize) -> usize {
        self.i * nodes_per_side + self.j
    }
}

impl GridLevel {
    pub fn new(level: usize) -> Result<Self> {
        if level == 0 || level > MAX_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "level must lie in 1..={MAX_LEVELS}, got {level}"
            )));
        }
        Ok(GridLevel {
            level,
            n: 5 * (1 << (level - 1)) + 1,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes_per_side(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    /// Interior nodes per side, `n − 2`.
    pub fn interior_side(&self) -> usize {
        self.n - 2
    }

    pub fn dof_count(&self) -> usize {
        self.interior_side() * self.interior_side()
    }

    pub fn is_interior(&self, idx: NodeIndex) -> bool {
        idx.i > 0 && idx.j > 0 && idx.i + 1 < self.n && idx.j + 1 < self.n
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.node_count())
            .map(|k| self.is_interior(self.unflatten(k)))
            .collect()
    }

    pub fn unflatten(&self, k: usize) -> NodeIndex {
        NodeIndex::new(k / self.n, k % self.n)
    }

    /// Coordinates `(x₁, x₂) = (j·h, i·h)`.
    pub fn node_coordinates(&self, idx: NodeIndex) -> Result<[f64; 2]> {
        if idx.i >= self.n || idx.j >= self.n {
            return Err(Error::InvalidArgument(format!(
                "node ({}, {}) outside a {}×{} grid",
                idx.i, idx.j, self.n, self.n
            )));
        }
        Ok(self.coords_unchecked(idx.i, idx.j))
    }

    // Division instead of multiplying by h keeps nested nodes bit-identical.
    pub(crate) fn coords_unchecked(&self, i: usize, j: usize) -> [f64; 2] {
        let m = (self.n - 1) as f64;
        [j as f64 / m, i as f64 / m]
    }

    /// Interior dof number of node `(i, j)`, or `None` on the boundary.
    pub fn dof_of(&self, i: usize, j: usize) -> Option<usize> {
        if self.is_interior(NodeIndex::new(i, j)) {
            Some((i - 1) * self.interior_side() + (j - 1))
        } else {
            None
        }
    }

    /// Signed variant of [`GridLevel::dof_of`] for stencil arithmetic.
    pub(crate) fn dof_of_signed(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 {
            return None;
        }
        self.dof_of(i as usize, j as usize)
    }

    pub fn node_of_dof(&self, dof: usize) -> NodeIndex {
        let m = self.interior_side();
        NodeIndex::new(dof / m + 1, dof % m + 1)
    }

    /// All triangles as flattened node triples, two per grid square, lower
    /// triangle `(i,j),(i,j+1),(i+1,j+1)` first.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let n = self.n;
        let mut tris = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let sw = i * n + j;
                let se = i * n + j + 1;
                let nw = (i + 1) * n + j;
                let ne = (i + 1) * n + j + 1;
                tris.push([sw, se, ne]);
                tris.push([sw, ne, nw]);
            }
        }
        tris
    }

    /// Restricts a full-grid nodal array to its interior dofs.
    pub fn interior_values(&self, full: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.node_count(), full.len())?;
        let m = self.interior_side();
        let mut out = Vec::with_capacity(self.dof_count());
        for i in 1..=m {
            out.extend_from_slice(&full[i * self.n + 1..i * self.n + 1 + m]);
        }
        Ok(out)
    }

    /// Embeds a dof vector into a full-grid array with zero boundary values.
    pub fn full_from_dofs(&self, dofs: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.dof_count(), dofs.len())?;
        let m = self.interior_side();
        let mut out = vec![0.0; self.node_count()];
        for i in 1..=m {
            out[i * self.n + 1..i * self.n + 1 + m].copy_from_slice(&dofs[(i - 1) * m..i * m]);
        }
        Ok(out)
    }
}

/// The nested sequence of grids, coarsest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridHierarchy {
    levels: Vec<GridLevel>,
}

impl GridHierarchy {
    pub fn build(level_count: usize) -> Result<Self> {
        if level_count == 0 || level_count > MAX_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "level count must lie in 1..={MAX_LEVELS}, got {level_count}"
            )));
        }
        let levels = (1..=level_count)
            .map(GridLevel::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(GridHierarchy { levels })
    }

    pub fn levels(&self) -> &[GridLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level by its 1-based number.
    pub fn level(&self, level: usize) -> Result<GridLevel> {
        level
            .checked_sub(1)
            .and_then(|k| self.levels.get(k))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no level {level} in hierarchy")))
    }

    pub fn finest(&self) -> GridLevel {
        *self.levels.last().expect("hierarchy is never empty")
    }

    /// The first `level_count` levels.
    pub fn truncated(&self, level_count: usize) -> Result<Self> {
        if level_count == 0 || level_count > self.levels.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a {}-level hierarchy to {level_count}",
                self.levels.len()
            )));
        }
        Ok(GridHierarchy {
            levels: self.levels[..level_count].to_vec(),
        })
    }
}
