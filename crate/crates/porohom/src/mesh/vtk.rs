//! Legacy ASCII VTK output (UNSTRUCTURED_GRID of triangles with point data).

use std::io::Write;
use std::path::Path;

use crate::mesh::TriMesh;
use crate::util::fmt_e12;
use crate::Result;

/// Writes the mesh and any number of nodal scalar fields as a legacy VTK
/// file. Field lengths must match the vertex count.
pub fn write_vtk(
    path: &Path,
    title: &str,
    mesh: &TriMesh,
    fields: &[(&str, &[f64])],
) -> Result<()> {
    for (name, data) in fields {
        if data.len() != mesh.vertices.len() {
            return Err(crate::Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!(
                    "field '{name}' has {} values for {} vertices",
                    data.len(),
                    mesh.vertices.len()
                ),
            )));
        }
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title);
    out.push('\n');
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {} double\n", mesh.vertices.len()));
    for v in &mesh.vertices {
        out.push_str(&format!(
            "{} {} {}\n",
            fmt_e12(v[0]),
            fmt_e12(v[1]),
            fmt_e12(0.0)
        ));
    }
    let nt = mesh.triangles.len();
    out.push_str(&format!("CELLS {} {}\n", nt, 4 * nt));
    for t in &mesh.triangles {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    out.push_str(&format!("CELL_TYPES {nt}\n"));
    for _ in 0..nt {
        out.push_str("5\n");
    }
    if !fields.is_empty() {
        out.push_str(&format!("POINT_DATA {}\n", mesh.vertices.len()));
        for (name, data) in fields {
            out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for &v in *data {
                out.push_str(&fmt_e12(v));
                out.push('\n');
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
