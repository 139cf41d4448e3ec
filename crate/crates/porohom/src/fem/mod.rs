//! P1 finite elements on the structured meshes: dof maps with periodic
//! identification or Dirichlet elimination, reference-triangle quadrature,
//! assembly, and sparse solvers with dense reference counterparts.

mod assemble;
pub mod dense;
mod solve;
mod sparse;

pub use assemble::{
    assemble_load_gradient, assemble_load_scalar, assemble_mass, assemble_mass_into,
    assemble_stiffness, build_pattern, element_quadrature_points, eliminate_dirichlet,
};
pub use solve::{
    preconditioned_cg, solve_mean_constrained, solve_spd, ConstrainedSolution, LinearOperator,
    SolveStats,
};
pub use sparse::{SparsePattern, SparseSystem};

use crate::mesh::CellMesh;
use crate::{Error, Result};

/// How a vertex participates in the linear system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexStatus {
    Free,
    DirichletEliminated,
    PeriodicSlave,
}

/// Vertex-to-dof translation. Periodic slaves share their master's dof;
/// Dirichlet vertices are eliminated (homogeneous data).
#[derive(Clone, Debug)]
pub struct DofMap {
    pub vertex_dof: Vec<Option<usize>>,
    pub status: Vec<VertexStatus>,
    pub n_dofs: usize,
    /// Optional mean-constraint weight per dof (e.g. the density-weighted
    /// P1 integrals over the perforated cell).
    pub mean_weight: Option<Vec<f64>>,
}

impl DofMap {
    pub fn unconstrained(n_vertices: usize) -> Self {
        DofMap {
            vertex_dof: (0..n_vertices).map(Some).collect(),
            status: vec![VertexStatus::Free; n_vertices],
            n_dofs: n_vertices,
            mean_weight: None,
        }
    }

    /// Identifies each periodic slave with its canonical master. The pair
    /// list of a cell mesh is already closed (masters map to themselves), so
    /// no chain chasing is needed; this is asserted.
    pub fn periodic(cell: &CellMesh) -> Result<Self> {
        let n = cell.mesh.vertices.len();
        let mut master_of: Vec<usize> = (0..n).collect();
        for &(slave, master) in &cell.periodic_pairs {
            if slave != master {
                master_of[slave] = master;
            }
        }
        for v in 0..n {
            let m = master_of[v];
            if master_of[m] != m {
                return Err(Error::Assembly(
                    "periodic identification is not closed (chain of length > 1)".into(),
                ));
            }
        }
        let mut vertex_dof = vec![None; n];
        let mut status = vec![VertexStatus::Free; n];
        let mut n_dofs = 0;
        for v in 0..n {
            if master_of[v] == v {
                vertex_dof[v] = Some(n_dofs);
                n_dofs += 1;
            }
        }
        for v in 0..n {
            if master_of[v] != v {
                vertex_dof[v] = vertex_dof[master_of[v]];
                status[v] = VertexStatus::PeriodicSlave;
            }
        }
        Ok(DofMap {
            vertex_dof,
            status,
            n_dofs,
            mean_weight: None,
        })
    }

    /// Eliminates the listed vertices (homogeneous Dirichlet data).
    pub fn with_dirichlet(n_vertices: usize, dirichlet: &[usize]) -> Self {
        let mut status = vec![VertexStatus::Free; n_vertices];
        for &v in dirichlet {
            status[v] = VertexStatus::DirichletEliminated;
        }
        let mut vertex_dof = vec![None; n_vertices];
        let mut n_dofs = 0;
        for v in 0..n_vertices {
            if status[v] == VertexStatus::Free {
                vertex_dof[v] = Some(n_dofs);
                n_dofs += 1;
            }
        }
        DofMap {
            vertex_dof,
            status,
            n_dofs,
            mean_weight: None,
        }
    }

    /// Dof vector -> nodal vector (eliminated vertices get 0).
    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        self.vertex_dof
            .iter()
            .map(|d| d.map_or(0.0, |k| dofs[k]))
            .collect()
    }

    /// Nodal vector -> dof vector (first owning vertex wins; identified
    /// vertices are assumed consistent).
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs];
        let mut seen = vec![false; self.n_dofs];
        for (v, d) in self.vertex_dof.iter().enumerate() {
            if let Some(k) = *d {
                if !seen[k] {
                    out[k] = nodal[v];
                    seen[k] = true;
                }
            }
        }
        out
    }

    /// True when the stiffness matrix on this map is positive definite
    /// (constants are excluded by at least one eliminated vertex).
    pub fn grounds_stiffness(&self) -> bool {
        self.status
            .iter()
            .any(|&s| s == VertexStatus::DirichletEliminated)
    }
}

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`; weights sum
/// to the reference area 1/2.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: u32,
}

impl QuadratureRule {
    /// Centroid rule, exact for affine integrands.
    pub fn degree1() -> Self {
        QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            degree: 1,
        }
    }

    /// Edge-midpoint rule, exact for quadratic integrands. Default for all
    /// P1 forms: exact mass, and exact stiffness for coefficients constant
    /// per element.
    pub fn degree2() -> Self {
        QuadratureRule {
            points: vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
            weights: vec![1.0 / 6.0; 3],
            degree: 2,
        }
    }

    pub fn for_degree(degree: u32) -> Result<Self> {
        match degree {
            1 => Ok(Self::degree1()),
            2 => Ok(Self::degree2()),
            other => Err(Error::Config(format!(
                "unsupported quadrature degree {other} (1 and 2 available)"
            ))),
        }
    }
}
