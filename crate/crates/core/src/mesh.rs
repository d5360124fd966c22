//! Periodic coarse and fine meshes on the unit interval.
//!
//! The coarse mesh has `N` nodes `0 = xi_0 < ... < xi_{N-1} = 1` and `N - 1`
//! cells. The last node is identified with the first, so global vectors carry
//! `N - 1` independent degrees of freedom.

use crate::error::{Error, Result};

/// Uniform periodic coarse mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMesh {
    nodes: Vec<f64>,
    width: f64,
}

impl CoarseMesh {
    /// Builds the uniform mesh with `node_count` nodes (including both ends of [0, 1]).
    pub fn new(node_count: usize) -> Result<Self> {
        if node_count < 3 {
            return Err(Error::InvalidMesh(format!(
                "coarse mesh needs at least 3 nodes, got {node_count}"
            )));
        }
        let cells = node_count - 1;
        let width = 1.0 / cells as f64;
        let nodes = (0..node_count).map(|i| i as f64 / cells as f64).collect();
        Ok(Self { nodes, width })
    }

    /// Mesh with `cells` coarse cells.
    pub fn with_cells(cells: usize) -> Result<Self> {
        Self::new(cells + 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of independent periodic degrees of freedom.
    pub fn dof_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Coarse mesh width `H`.
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, m: usize) -> f64 {
        self.nodes[m]
    }

    /// `(left, right)` end points of coarse cell `cell`.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        (self.nodes[cell], self.nodes[cell + 1])
    }

    /// Global DOFs of the left and right node of `cell` after periodic gluing.
    pub fn cell_dofs(&self, cell: usize) -> (usize, usize) {
        let n = self.dof_count();
        (cell, (cell + 1) % n)
    }

    /// Maps `x` (any real) to `(cell, local coordinate in [0, 1))`.
    pub fn locate_periodic(&self, x: f64) -> (usize, f64) {
        let y = x.rem_euclid(1.0);
        let cells = self.cell_count();
        let scaled = y * cells as f64;
        let mut cell = scaled.floor() as usize;
        if cell >= cells {
            cell = cells - 1;
        }
        let mut local = scaled - cell as f64;
        // rem_euclid can return exactly 1.0 after rounding of tiny negatives
        if local >= 1.0 {
            local = 0.0;
            cell = (cell + 1) % cells;
        }
        (cell, local.max(0.0))
    }

    /// Uniform fine mesh with `fine_nodes` nodes inside `cell`.
    pub fn fine(&self, cell: usize, fine_nodes: usize) -> Result<FineMesh> {
        FineMesh::new(self, cell, fine_nodes)
    }
}

/// Uniform mesh inside one coarse cell, end points shared with the coarse nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FineMesh {
    parent: usize,
    nodes: Vec<f64>,
    width: f64,
}

impl FineMesh {
    pub fn new(coarse: &CoarseMesh, cell: usize, fine_nodes: usize) -> Result<Self> {
        if fine_nodes < 3 {
            return Err(Error::InvalidMesh(format!(
                "fine mesh needs at least 3 nodes, got {fine_nodes}"
            )));
        }
        Self::build(coarse, cell, fine_nodes)
    }

    /// Single-element "fine" mesh; the basis on it is the frozen coarse hat.
    pub fn single_element(coarse: &CoarseMesh, cell: usize) -> Result<Self> {
        Self::build(coarse, cell, 2)
    }

    fn build(coarse: &CoarseMesh, cell: usize, fine_nodes: usize) -> Result<Self> {
        if cell >= coarse.cell_count() {
            return Err(Error::InvalidMesh(format!(
                "cell {cell} out of range ({} cells)",
                coarse.cell_count()
            )));
        }
        let (left, right) = coarse.cell_bounds(cell);
        let segments = fine_nodes - 1;
        let mut nodes: Vec<f64> = (0..fine_nodes)
            .map(|j| {
                let s = j as f64 / segments as f64;
                (1.0 - s) * left + s * right
            })
            .collect();
        nodes[0] = left;
        nodes[segments] = right;
        Ok(Self {
            parent: cell,
            nodes,
            width: coarse.width() / segments as f64,
        })
    }

    pub fn parent(&self) -> usize {
        self.parent
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Fine width `h`.
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Local coordinate in the parent cell of fine node `j`.
    pub fn local_coordinate(&self, j: usize) -> f64 {
        j as f64 / self.element_count() as f64
    }
}
