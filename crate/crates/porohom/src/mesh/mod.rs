//! Structured simplex meshes: unit cells (optionally perforated by the
//! reference hole) and macroscopic boxes perforated by the scaled hole
//! lattice.
//!
//! All meshes start from a regular lattice split into triangles with
//! alternating diagonals, so the triangulation inherits the mirror and
//! diagonal symmetries of the square. Holes are carved by removing every
//! triangle touching an interior vertex and snapping the resulting rim onto
//! the exact hole boundary; the geometric error of the carved boundary is
//! O(h).

mod vtk;

pub use vtk::write_vtk;

use crate::model::{BoxDomain, HoleSpec};
use crate::{Error, Result};

/// Structured lattice metadata kept alongside every mesh; supports O(1)
/// point location on meshes whose vertices were never moved.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Cells per axis.
    pub n: [usize; 2],
}

impl Lattice {
    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.hi[0] - self.lo[0]) / self.n[0] as f64,
            (self.hi[1] - self.lo[1]) / self.n[1] as f64,
        ]
    }

    pub fn vertex_coord(&self, i: usize, j: usize) -> [f64; 2] {
        let s = self.spacing();
        [self.lo[0] + i as f64 * s[0], self.lo[1] + j as f64 * s[1]]
    }

    /// Linear index of lattice node `(i, j)`, row-major.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n[0] + 1) + i
    }

    pub fn node_count(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1)
    }
}

/// Triangle mesh with lattice provenance.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// CCW vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub lattice: Lattice,
    /// Lattice node -> surviving vertex id.
    pub grid_vertex: Vec<Option<usize>>,
    /// True once any vertex was snapped; lattice point location is then
    /// disabled.
    pub distorted: bool,
}

impl TriMesh {
    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area (positive for CCW triangles).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_coords(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    pub fn measure(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Constant P1 basis gradients and the (positive) triangle area.
    pub fn basis_gradients(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [p, q, r] = self.triangle_coords(t);
        let two_a = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
        let g = [
            [(q[1] - r[1]) / two_a, (r[0] - q[0]) / two_a],
            [(r[1] - p[1]) / two_a, (p[0] - r[0]) / two_a],
            [(p[1] - q[1]) / two_a, (q[0] - p[0]) / two_a],
        ];
        (g, 0.5 * two_a)
    }

    /// Gradient of a P1 nodal field on triangle `t`.
    pub fn gradient_in(&self, t: usize, nodal: &[f64]) -> [f64; 2] {
        let (g, _) = self.basis_gradients(t);
        let [a, b, c] = self.triangles[t];
        [
            nodal[a] * g[0][0] + nodal[b] * g[1][0] + nodal[c] * g[2][0],
            nodal[a] * g[0][1] + nodal[b] * g[1][1] + nodal[c] * g[2][1],
        ]
    }

    /// Smallest interior angle over all triangles, degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let c = self.triangle_coords(t);
            for k in 0..3 {
                let a = c[k];
                let b = c[(k + 1) % 3];
                let d = c[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [d[0] - a[0], d[1] - a[1]];
                let dot = u[0] * v[0] + u[1] * v[1];
                let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
                let ang = (dot / (nu * nv)).clamp(-1.0, 1.0).acos();
                best = best.min(ang.to_degrees());
            }
        }
        best
    }

    /// Locates `p` in the undistorted lattice triangulation and returns the
    /// triangle index plus barycentric coordinates. Points outside the box
    /// are clamped to it.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        if self.distorted {
            return Err(Error::Mesh(
                "point location requires an undistorted lattice mesh".into(),
            ));
        }
        let s = self.spacing_checked()?;
        let mut cell = [0usize; 2];
        let mut local = [0f64; 2];
        for a in 0..2 {
            let rel = ((p[a] - self.lattice.lo[a]) / s[a]).clamp(0.0, self.lattice.n[a] as f64);
            let mut c = rel.floor() as usize;
            if c >= self.lattice.n[a] {
                c = self.lattice.n[a] - 1;
            }
            cell[a] = c;
            local[a] = rel - c as f64;
        }
        let base = 2 * (cell[1] * self.lattice.n[0] + cell[0]);
        let even = (cell[0] + cell[1]) % 2 == 0;
        let idx = if even {
            // diagonal v00-v11: lower triangle covers local.y <= local.x
            if local[1] <= local[0] {
                base
            } else {
                base + 1
            }
        } else {
            // diagonal v10-v01: lower triangle covers x + y <= 1
            if local[0] + local[1] <= 1.0 {
                base
            } else {
                base + 1
            }
        };
        let coords = self.triangle_coords(idx);
        Ok((idx, barycentric(coords, p)))
    }

    /// P1 evaluation of a nodal field at an arbitrary point (undistorted
    /// meshes only).
    pub fn eval_p1(&self, nodal: &[f64], p: [f64; 2]) -> Result<f64> {
        let (t, w) = self.locate(p)?;
        let [a, b, c] = self.triangles[t];
        Ok(w[0] * nodal[a] + w[1] * nodal[b] + w[2] * nodal[c])
    }

    fn spacing_checked(&self) -> Result<[f64; 2]> {
        let s = self.lattice.spacing();
        if s[0] <= 0.0 || s[1] <= 0.0 {
            return Err(Error::Mesh("degenerate lattice".into()));
        }
        Ok(s)
    }
}

/// Barycentric coordinates of `p` in the triangle `c` (no clipping).
pub fn barycentric(c: [[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let two_a =
        (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[1][1] - c[0][1]) * (c[2][0] - c[0][0]);
    let w0 = ((c[1][0] - p[0]) * (c[2][1] - p[1]) - (c[1][1] - p[1]) * (c[2][0] - p[0])) / two_a;
    let w1 = ((c[2][0] - p[0]) * (c[0][1] - p[1]) - (c[2][1] - p[1]) * (c[0][0] - p[0])) / two_a;
    [w0, w1, 1.0 - w0 - w1]
}

/// Unit-cell mesh, possibly perforated by the reference hole. Periodic
/// partner bookkeeping lives here; degrees of freedom are identified later by
/// the dof map.
#[derive(Clone, Debug)]
pub struct CellMesh {
    pub mesh: TriMesh,
    /// `(slave, master)` pairs: every lattice node on a max face paired with
    /// its mod-1 canonical node. All four corners share one master.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Undirected edges tracing the carved hole boundary.
    pub hole_boundary: Vec<[usize; 2]>,
    pub hole: HoleSpec,
    /// Smallest interior angle (degrees), a mesh-quality statistic.
    pub min_angle_deg: f64,
}

impl CellMesh {
    /// Opposite-face partner of an outer vertex: boundary coordinates flip
    /// 0 <-> 1. An involution on the outer ring.
    pub fn periodic_flip(&self, v: usize) -> Option<usize> {
        let n = self.mesh.lattice.n;
        let (i, j) = self.node_of_vertex(v)?;
        if i != 0 && i != n[0] && j != 0 && j != n[1] {
            return None;
        }
        let fi = if i == 0 {
            n[0]
        } else if i == n[0] {
            0
        } else {
            i
        };
        let fj = if j == 0 {
            n[1]
        } else if j == n[1] {
            0
        } else {
            j
        };
        self.mesh.grid_vertex[self.mesh.lattice.node_index(fi, fj)]
    }

    fn node_of_vertex(&self, v: usize) -> Option<(usize, usize)> {
        let n = self.mesh.lattice.n;
        for j in [0, n[1]] {
            for i in 0..=n[0] {
                if self.mesh.grid_vertex[self.mesh.lattice.node_index(i, j)] == Some(v) {
                    return Some((i, j));
                }
            }
        }
        for i in [0, n[0]] {
            for j in 0..=n[1] {
                if self.mesh.grid_vertex[self.mesh.lattice.node_index(i, j)] == Some(v) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// One hole facet of a perforated mesh with its outward normal (pointing
/// from the material into the hole). Nothing is imposed on these facets; the
/// flux condition is natural for the weak form.
#[derive(Clone, Copy, Debug)]
pub struct HoleFacet {
    pub edge: [usize; 2],
    pub normal: [f64; 2],
}

/// Macroscopic box mesh with the scaled hole lattice carved out.
#[derive(Clone, Debug)]
pub struct PerforatedMesh {
    pub mesh: TriMesh,
    /// Vertices on the outer box boundary (homogeneous Dirichlet).
    pub dirichlet: Vec<usize>,
    /// Facets on hole boundaries with outward normals.
    pub neumann: Vec<HoleFacet>,
    pub epsilon: f64,
    pub hole_count: usize,
}

/// Total mesh area; works for any of the mesh wrappers via `TriMesh`.
pub fn mesh_measure(mesh: &TriMesh) -> f64 {
    mesh.measure()
}

fn lattice_mesh(domain: BoxDomain, n: [usize; 2]) -> TriMesh {
    let lattice = Lattice {
        lo: domain.lo,
        hi: domain.hi,
        n,
    };
    let mut vertices = Vec::with_capacity(lattice.node_count());
    let mut grid_vertex = Vec::with_capacity(lattice.node_count());
    for j in 0..=n[1] {
        for i in 0..=n[0] {
            grid_vertex.push(Some(vertices.len()));
            vertices.push(lattice.vertex_coord(i, j));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n[0] * n[1]);
    for j in 0..n[1] {
        for i in 0..n[0] {
            let v00 = lattice.node_index(i, j);
            let v10 = lattice.node_index(i + 1, j);
            let v01 = lattice.node_index(i, j + 1);
            let v11 = lattice.node_index(i + 1, j + 1);
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    TriMesh {
        vertices,
        triangles,
        lattice,
        grid_vertex,
        distorted: false,
    }
}

struct CarveOutcome {
    hole_boundary: Vec<[usize; 2]>,
}

/// Carves `holes` out of a freshly built lattice mesh: removes triangles
/// touching interior vertices, snaps the rim onto the exact boundaries,
/// absorbs degenerate rim slivers into the holes, drops orphan vertices and
/// compacts indices. Errors out when the lattice cannot resolve a hole.
fn carve_holes(mesh: &mut TriMesh, holes: &[HoleSpec]) -> Result<CarveOutcome> {
    if holes.is_empty() {
        return Ok(CarveOutcome {
            hole_boundary: Vec::new(),
        });
    }
    let s = mesh.lattice.spacing();
    let h = s[0].max(s[1]);
    let nv = mesh.vertices.len();

    // Nearest hole per vertex, looked up only inside inflated bounding boxes.
    let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); nv];
    for (hid, hole) in holes.iter().enumerate() {
        let (center, reach) = match hole {
            HoleSpec::None => continue,
            HoleSpec::Disk { center, radius } => (*center, *radius),
            HoleSpec::Square { center, half_width } => (*center, *half_width),
        };
        if reach < 2.0 * h {
            return Err(Error::Mesh(format!(
                "mesh too coarse to resolve a hole of reach {reach}: need spacing <= {}, have {h}",
                reach / 2.0
            )));
        }
        let margin = reach + 2.5 * h;
        let i0 = (((center[0] - margin) - mesh.lattice.lo[0]) / s[0])
            .floor()
            .max(0.0) as usize;
        let j0 = (((center[1] - margin) - mesh.lattice.lo[1]) / s[1])
            .floor()
            .max(0.0) as usize;
        let i1 = ((((center[0] + margin) - mesh.lattice.lo[0]) / s[0]).ceil() as usize)
            .min(mesh.lattice.n[0]);
        let j1 = ((((center[1] + margin) - mesh.lattice.lo[1]) / s[1]).ceil() as usize)
            .min(mesh.lattice.n[1]);
        for j in j0..=j1 {
            for i in i0..=i1 {
                if let Some(v) = mesh.grid_vertex[mesh.lattice.node_index(i, j)] {
                    let d = hole.signed_distance(mesh.vertices[v]);
                    if d < best[v].0 {
                        best[v] = (d, hid);
                    }
                }
            }
        }
    }

    let inside: Vec<bool> = best.iter().map(|&(d, _)| d < 0.0).collect();
    let mut keep: Vec<bool> = mesh
        .triangles
        .iter()
        .map(|t| t.iter().all(|&v| !inside[v]))
        .collect();

    // Rim vertices: kept vertices adjacent to a removed triangle.
    let mut in_kept = vec![false; nv];
    let mut in_removed = vec![false; nv];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            if keep[t] {
                in_kept[v] = true;
            } else {
                in_removed[v] = true;
            }
        }
    }

    let (blo, bhi) = (mesh.lattice.lo, mesh.lattice.hi);
    let on_outer_boundary = move |p: [f64; 2]| {
        let eps = 1e-12 * h;
        (p[0] - blo[0]).abs() < eps
            || (p[0] - bhi[0]).abs() < eps
            || (p[1] - blo[1]).abs() < eps
            || (p[1] - bhi[1]).abs() < eps
    };

    let mut distorted = false;
    let mut is_rim = vec![false; nv];
    for v in 0..nv {
        if !(in_kept[v] && in_removed[v] && !inside[v]) {
            continue;
        }
        is_rim[v] = true;
        if on_outer_boundary(mesh.vertices[v]) {
            return Err(Error::Mesh(
                "hole carving reached the outer boundary; refine the mesh".into(),
            ));
        }
        let (d, hid) = best[v];
        debug_assert!(d <= 1.5 * h * std::f64::consts::SQRT_2);
        let snapped = holes[hid].project_to_boundary(mesh.vertices[v]);
        if snapped != mesh.vertices[v] {
            mesh.vertices[v] = snapped;
            distorted = true;
        }
    }

    // Degenerate rim slivers (all three vertices snapped onto the boundary
    // can collapse the triangle) become part of the hole; anything else
    // collapsing means the resolution is insufficient.
    let floor_area = 1e-3 * 0.5 * s[0] * s[1];
    for t in 0..mesh.triangles.len() {
        if !keep[t] {
            continue;
        }
        let area = mesh.triangle_area(t);
        if area <= floor_area {
            if mesh.triangles[t].iter().all(|&v| is_rim[v]) {
                keep[t] = false;
            } else {
                return Err(Error::Mesh(format!(
                    "hole carving produced a degenerate triangle (area {area}); refine the mesh"
                )));
            }
        }
    }

    // Hole boundary: kept-side edges incident to exactly one kept triangle,
    // away from the outer box boundary.
    use std::collections::HashMap;
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !keep[t] {
            continue;
        }
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            let key = (a.min(b), a.max(b));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    let mut hole_boundary: Vec<[usize; 2]> = edge_count
        .iter()
        .filter(|&(&(a, b), &c)| {
            c == 1 && !(on_outer_boundary(mesh.vertices[a]) && on_outer_boundary(mesh.vertices[b]))
        })
        .map(|(&(a, b), _)| [a, b])
        .collect();
    hole_boundary.sort_unstable();

    // Compact: drop removed triangles and orphan vertices.
    let mut referenced = vec![false; nv];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if keep[t] {
            for &v in tri {
                referenced[v] = true;
            }
        }
    }
    let mut remap = vec![usize::MAX; nv];
    let mut new_vertices = Vec::new();
    for v in 0..nv {
        if referenced[v] {
            remap[v] = new_vertices.len();
            new_vertices.push(mesh.vertices[v]);
        }
    }
    let new_triangles: Vec<[usize; 3]> = mesh
        .triangles
        .iter()
        .enumerate()
        .filter(|&(t, _)| keep[t])
        .map(|(_, tri)| [remap[tri[0]], remap[tri[1]], remap[tri[2]]])
        .collect();
    for slot in mesh.grid_vertex.iter_mut() {
        *slot = slot.and_then(|v| if referenced[v] { Some(remap[v]) } else { None });
    }
    mesh.vertices = new_vertices;
    mesh.triangles = new_triangles;
    mesh.distorted = distorted;
    for e in hole_boundary.iter_mut() {
        *e = [remap[e[0]], remap[e[1]]];
    }

    for t in 0..mesh.triangles.len() {
        let a = mesh.triangle_area(t);
        if !(a > 0.0) {
            return Err(Error::Mesh(format!(
                "non-positive triangle area {a} after carving"
            )));
        }
    }

    Ok(CarveOutcome { hole_boundary })
}

/// Builds the unit-cell mesh, carving the reference hole when present.
/// Requires `0 < h <= 1/4`; the lattice must also resolve the hole and the
/// gap between hole and cell boundary (two cells each), otherwise the call
/// is rejected with the required spacing.
pub fn build_cell_mesh(hole: &HoleSpec, h: f64) -> Result<CellMesh> {
    if !(h > 0.0 && h <= 0.25) {
        return Err(Error::Mesh(format!(
            "cell mesh spacing h = {h} outside (0, 1/4]"
        )));
    }
    hole.validate()?;
    if !hole.is_none() {
        let clearance = hole.clearance();
        let required = clearance / 2.0;
        if h > required + 1e-12 {
            return Err(Error::Mesh(format!(
                "h = {h} too coarse for the hole clearance {clearance}; need h <= {required}"
            )));
        }
    }
    let n = (1.0 / h - 1e-9).ceil() as usize;
    let mut mesh = lattice_mesh(BoxDomain::unit(), [n, n]);
    let holes = match hole {
        HoleSpec::None => vec![],
        other => vec![other.clone()],
    };
    let outcome = carve_holes(&mut mesh, &holes)?;

    let mut periodic_pairs = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            if i != n && j != n {
                continue;
            }
            let slave =
                mesh.grid_vertex[mesh.lattice.node_index(i, j)].expect("outer ring never carved");
            let master = mesh.grid_vertex[mesh.lattice.node_index(i % n, j % n)]
                .expect("outer ring never carved");
            periodic_pairs.push((slave, master));
        }
    }

    let min_angle_deg = mesh.min_angle_deg();
    Ok(CellMesh {
        mesh,
        periodic_pairs,
        hole_boundary: outcome.hole_boundary,
        hole: hole.clone(),
        min_angle_deg,
    })
}

/// Plain box mesh of the macroscopic domain (no holes), used for the limit
/// problem. `h` is an upper bound on the spacing.
pub fn build_macro_mesh(domain: BoxDomain, h: f64) -> Result<PerforatedMesh> {
    domain.validate()?;
    if !(h > 0.0) {
        return Err(Error::Mesh("macro mesh spacing must be positive".into()));
    }
    let ext = domain.extent();
    let n = [
        (ext[0] / h - 1e-9).ceil().max(1.0) as usize,
        (ext[1] / h - 1e-9).ceil().max(1.0) as usize,
    ];
    let mesh = lattice_mesh(domain, n);
    let dirichlet = outer_boundary_vertices(&mesh);
    Ok(PerforatedMesh {
        mesh,
        dirichlet,
        neumann: Vec::new(),
        epsilon: 0.0,
        hole_count: 0,
    })
}

fn outer_boundary_vertices(mesh: &TriMesh) -> Vec<usize> {
    let n = mesh.lattice.n;
    let mut out = Vec::new();
    for j in 0..=n[1] {
        for i in 0..=n[0] {
            if i == 0 || i == n[0] || j == 0 || j == n[1] {
                if let Some(v) = mesh.grid_vertex[mesh.lattice.node_index(i, j)] {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Builds the perforated macroscopic mesh for scale parameter `epsilon`:
/// the box triangulated at spacing `h <= epsilon^2 / 8` with one scaled hole
/// per period cell whose hole fits strictly inside the domain.
/// `max_vertices` guards against accidental huge lattices.
pub fn build_perforated_mesh(
    domain: BoxDomain,
    epsilon: f64,
    hole: &HoleSpec,
    h: f64,
    max_vertices: usize,
) -> Result<PerforatedMesh> {
    domain.validate()?;
    hole.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Mesh(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let cell = epsilon * epsilon;
    let required = cell / 8.0;
    if !(h > 0.0 && h <= required + 1e-12) {
        return Err(Error::Mesh(format!(
            "h = {h} too coarse for epsilon = {epsilon}; need h <= {required}"
        )));
    }
    let ext = domain.extent();
    let n = [
        (ext[0] / h - 1e-9).ceil().max(1.0) as usize,
        (ext[1] / h - 1e-9).ceil().max(1.0) as usize,
    ];
    let est_vertices = (n[0] + 1) * (n[1] + 1);
    if est_vertices > max_vertices {
        return Err(Error::Mesh(format!(
            "estimated vertex count {est_vertices} exceeds the cap {max_vertices}"
        )));
    }

    let mut mesh = lattice_mesh(domain, n);

    // Hole lattice: one scaled copy per period cell, kept only when the hole
    // itself sits strictly inside the open domain.
    let mut holes = Vec::new();
    if !hole.is_none() {
        let (center, reach) = match hole {
            HoleSpec::Disk { center, radius } => (*center, *radius),
            HoleSpec::Square { center, half_width } => (*center, *half_width),
            HoleSpec::None => unreachable!(),
        };
        let k_lo = [
            (domain.lo[0] / cell).floor() as i64 - 1,
            (domain.lo[1] / cell).floor() as i64 - 1,
        ];
        let k_hi = [
            (domain.hi[0] / cell).ceil() as i64 + 1,
            (domain.hi[1] / cell).ceil() as i64 + 1,
        ];
        for kx in k_lo[0]..=k_hi[0] {
            for ky in k_lo[1]..=k_hi[1] {
                let c = [
                    cell * (kx as f64 + center[0]),
                    cell * (ky as f64 + center[1]),
                ];
                let r = cell * reach;
                let fits = (0..2).all(|a| c[a] - r > domain.lo[a] && c[a] + r < domain.hi[a]);
                if !fits {
                    continue;
                }
                holes.push(match hole {
                    HoleSpec::Disk { .. } => HoleSpec::Disk {
                        center: c,
                        radius: r,
                    },
                    HoleSpec::Square { .. } => HoleSpec::Square {
                        center: c,
                        half_width: r,
                    },
                    HoleSpec::None => unreachable!(),
                });
            }
        }
    }
    let hole_count = holes.len();
    let outcome = carve_holes(&mut mesh, &holes)?;

    // Outward (into-hole) normals: material lies left of each CCW directed
    // edge, so rotate the directed edge by -90 degrees.
    let mut directed: std::collections::HashMap<(usize, usize), [f64; 2]> =
        std::collections::HashMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            directed.insert((a, b), [d[1] / len, -d[0] / len]);
        }
    }
    let neumann = outcome
        .hole_boundary
        .iter()
        .map(|&[a, b]| {
            let (edge, normal) = if let Some(&nrm) = directed.get(&(a, b)) {
                ([a, b], nrm)
            } else {
                let nrm = directed[&(b, a)];
                ([b, a], nrm)
            };
            HoleFacet { edge, normal }
        })
        .collect();

    let dirichlet = outer_boundary_vertices(&mesh);
    Ok(PerforatedMesh {
        mesh,
        dirichlet,
        neumann,
        epsilon,
        hole_count,
    })
}
