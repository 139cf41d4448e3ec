//! P1 assembly of stiffness, mass and load vectors.
//!
//! Coefficients are sampled at quadrature points nudged a relative 1e-9
//! toward the element centroid, so piecewise coefficients whose jumps lie on
//! mesh lines are always sampled from the element's own side.

use std::sync::Arc;

use crate::fem::{DofMap, QuadratureRule, SparsePattern, SparseSystem};
use crate::mesh::TriMesh;
use crate::{Error, Result};

const NUDGE: f64 = 1e-9;

pub fn build_pattern(mesh: &TriMesh, dofmap: &DofMap) -> Arc<SparsePattern> {
    let cliques: Vec<Vec<usize>> = mesh
        .triangles
        .iter()
        .map(|tri| tri.iter().filter_map(|&v| dofmap.vertex_dof[v]).collect())
        .collect();
    SparsePattern::from_cliques(dofmap.n_dofs, cliques)
}

fn mapped_point(coords: &[[f64; 2]; 3], q: [f64; 2]) -> [f64; 2] {
    [
        coords[0][0] + (coords[1][0] - coords[0][0]) * q[0] + (coords[2][0] - coords[0][0]) * q[1],
        coords[0][1] + (coords[1][1] - coords[0][1]) * q[0] + (coords[2][1] - coords[0][1]) * q[1],
    ]
}

fn nudged(x: [f64; 2], centroid: [f64; 2]) -> [f64; 2] {
    [
        x[0] + NUDGE * (centroid[0] - x[0]),
        x[1] + NUDGE * (centroid[1] - x[1]),
    ]
}

fn centroid(coords: &[[f64; 2]; 3]) -> [f64; 2] {
    [
        (coords[0][0] + coords[1][0] + coords[2][0]) / 3.0,
        (coords[0][1] + coords[1][1] + coords[2][1]) / 3.0,
    ]
}

/// The exact physical points (and weights) at which assembly samples
/// coefficients on element `t`, nudge included. Everything that must agree
/// with assembly bit-for-bit (tensor integration, coefficient pre-sampling)
/// iterates the same list.
pub fn element_quadrature_points<'a>(
    mesh: &'a TriMesh,
    t: usize,
    quad: &'a QuadratureRule,
) -> impl Iterator<Item = ([f64; 2], [f64; 2], f64)> + 'a {
    let tri = mesh.triangles[t];
    let coords = [
        mesh.vertices[tri[0]],
        mesh.vertices[tri[1]],
        mesh.vertices[tri[2]],
    ];
    let ctr = centroid(&coords);
    quad.points
        .iter()
        .zip(&quad.weights)
        .map(move |(q, &w)| (*q, nudged(mapped_point(&coords, *q), ctr), w))
}

/// `K_ij = integral (A grad phi_j) . grad phi_i`. The local block is filled
/// symmetrically, so the assembled matrix is exactly symmetric. `spd` is set
/// when the dof map grounds the constants.
pub fn assemble_stiffness(
    mesh: &TriMesh,
    dofmap: &DofMap,
    pattern: &Arc<SparsePattern>,
    quad: &QuadratureRule,
    coeff: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
) -> Result<SparseSystem> {
    let mut sys = SparseSystem::zeros(pattern.clone());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (grads, area) = mesh.basis_gradients(t);
        if !(area > 0.0) {
            return Err(Error::Assembly(format!(
                "element {t} has non-positive area {area}"
            )));
        }
        let mut local = [[0.0f64; 3]; 3];
        for (_, x, w) in element_quadrature_points(mesh, t, quad) {
            let a = coeff(x);
            if a.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Assembly(format!(
                    "non-finite conductivity at {x:?} (element {t})"
                )));
            }
            let scale = w * 2.0 * area;
            for i in 0..3 {
                for j in i..3 {
                    let agj = [
                        a[0][0] * grads[j][0] + a[0][1] * grads[j][1],
                        a[1][0] * grads[j][0] + a[1][1] * grads[j][1],
                    ];
                    local[i][j] += scale * (agj[0] * grads[i][0] + agj[1] * grads[i][1]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..i {
                local[i][j] = local[j][i];
            }
        }
        for i in 0..3 {
            let Some(r) = dofmap.vertex_dof[tri[i]] else {
                continue;
            };
            for j in 0..3 {
                if let Some(c) = dofmap.vertex_dof[tri[j]] {
                    sys.add_at(r, c, local[i][j]);
                }
            }
        }
    }
    sys.spd = dofmap.grounds_stiffness();
    Ok(sys)
}

/// `M_ij = integral w(x) phi_i phi_j`, written into a fresh matrix.
pub fn assemble_mass(
    mesh: &TriMesh,
    dofmap: &DofMap,
    pattern: &Arc<SparsePattern>,
    quad: &QuadratureRule,
    weight: &dyn Fn([f64; 2]) -> f64,
) -> Result<SparseSystem> {
    let mut sys = SparseSystem::zeros(pattern.clone());
    assemble_mass_into(&mut sys, mesh, dofmap, quad, weight)?;
    Ok(sys)
}

/// Re-assembles a mass-type matrix in place (pattern reuse for coefficients
/// that change over time). Positive weights make the result positive
/// definite; the `spd` flag is set accordingly by bound inspection per
/// element sample.
pub fn assemble_mass_into(
    sys: &mut SparseSystem,
    mesh: &TriMesh,
    dofmap: &DofMap,
    quad: &QuadratureRule,
    weight: &dyn Fn([f64; 2]) -> f64,
) -> Result<()> {
    sys.values.iter_mut().for_each(|v| *v = 0.0);
    let mut min_weight = f64::INFINITY;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (_, area) = mesh.basis_gradients(t);
        if !(area > 0.0) {
            return Err(Error::Assembly(format!(
                "element {t} has non-positive area {area}"
            )));
        }
        let mut local = [[0.0f64; 3]; 3];
        for (q, x, w) in element_quadrature_points(mesh, t, quad) {
            let wx = weight(x);
            if !wx.is_finite() {
                return Err(Error::Assembly(format!(
                    "non-finite weight at {x:?} (element {t})"
                )));
            }
            min_weight = min_weight.min(wx);
            let lambda = [1.0 - q[0] - q[1], q[0], q[1]];
            let scale = w * 2.0 * area * wx;
            for i in 0..3 {
                for j in i..3 {
                    local[i][j] += scale * lambda[i] * lambda[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..i {
                local[i][j] = local[j][i];
            }
        }
        for i in 0..3 {
            let Some(r) = dofmap.vertex_dof[tri[i]] else {
                continue;
            };
            for j in 0..3 {
                if let Some(c) = dofmap.vertex_dof[tri[j]] {
                    sys.add_at(r, c, local[i][j]);
                }
            }
        }
    }
    sys.symmetric = true;
    sys.spd = min_weight > 0.0;
    Ok(())
}

/// `F_i = integral g(x) phi_i`.
pub fn assemble_load_scalar(
    mesh: &TriMesh,
    dofmap: &DofMap,
    quad: &QuadratureRule,
    g: &dyn Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dofmap.n_dofs];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (_, area) = mesh.basis_gradients(t);
        for (q, x, w) in element_quadrature_points(mesh, t, quad) {
            let gx = g(x);
            if !gx.is_finite() {
                return Err(Error::Assembly(format!(
                    "non-finite load at {x:?} (element {t})"
                )));
            }
            let lambda = [1.0 - q[0] - q[1], q[0], q[1]];
            let scale = w * 2.0 * area * gx;
            for i in 0..3 {
                if let Some(r) = dofmap.vertex_dof[tri[i]] {
                    out[r] += scale * lambda[i];
                }
            }
        }
    }
    Ok(out)
}

/// `F_i = integral G(x) . grad phi_i`.
pub fn assemble_load_gradient(
    mesh: &TriMesh,
    dofmap: &DofMap,
    quad: &QuadratureRule,
    g: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dofmap.n_dofs];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (grads, area) = mesh.basis_gradients(t);
        for (_, x, w) in element_quadrature_points(mesh, t, quad) {
            let gx = g(x);
            if !gx[0].is_finite() || !gx[1].is_finite() {
                return Err(Error::Assembly(format!(
                    "non-finite load at {x:?} (element {t})"
                )));
            }
            let scale = w * 2.0 * area;
            for i in 0..3 {
                if let Some(r) = dofmap.vertex_dof[tri[i]] {
                    out[r] += scale * (gx[0] * grads[i][0] + gx[1] * grads[i][1]);
                }
            }
        }
    }
    Ok(out)
}

/// Reduces a full (per-vertex) system by eliminating Dirichlet vertices with
/// prescribed values. Returns the reduced matrix, the right-hand-side shift
/// (to be subtracted: `rhs_reduced = rhs_free - shift`) and the vertex ->
/// reduced-index map. Reference path for inhomogeneous data and a
/// cross-check of the dof-map scatter.
pub fn eliminate_dirichlet(
    full: &SparseSystem,
    is_dirichlet: &[bool],
    boundary_values: &[f64],
) -> (SparseSystem, Vec<f64>, Vec<Option<usize>>) {
    let n = full.dim();
    assert_eq!(is_dirichlet.len(), n);
    assert_eq!(boundary_values.len(), n);
    let mut index = vec![None; n];
    let mut m = 0;
    for v in 0..n {
        if !is_dirichlet[v] {
            index[v] = Some(m);
            m += 1;
        }
    }
    let p = &full.pattern;
    let mut cliques: Vec<Vec<usize>> = Vec::with_capacity(n);
    for r in 0..n {
        if index[r].is_none() {
            continue;
        }
        let mut row = vec![index[r].unwrap()];
        for k in p.row_ptr[r]..p.row_ptr[r + 1] {
            if let Some(c) = index[p.cols[k]] {
                row.push(c);
            }
        }
        cliques.push(row);
    }
    let pattern = SparsePattern::from_cliques(m, cliques);
    let mut reduced = SparseSystem::zeros(pattern);
    let mut shift = vec![0.0; m];
    for r in 0..n {
        let Some(rr) = index[r] else { continue };
        for k in p.row_ptr[r]..p.row_ptr[r + 1] {
            let c = p.cols[k];
            match index[c] {
                Some(cc) => reduced.add_at(rr, cc, full.values[k]),
                None => shift[rr] += full.values[k] * boundary_values[c],
            }
        }
    }
    reduced.symmetric = full.symmetric;
    reduced.spd = full.spd || is_dirichlet.iter().any(|&d| d);
    (reduced, shift, index)
}
