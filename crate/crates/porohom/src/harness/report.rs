//! Report artifacts (CSV tables, VTK snapshot series) and the space-time
//! error metric used by the convergence study.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::evolution::{EnergyLog, Trajectory};
use crate::mesh::{write_vtk, TriMesh};
use crate::multiscale::EffectiveTensor;
use crate::util::fmt_e12;
use crate::{Error, Result};

/// Exact integral of the square of a P1 nodal field. Per element the mass
/// matrix reduces to `area/12 * ((c0+c1+c2)^2 + c0^2 + c1^2 + c2^2)`.
pub fn p1_l2_sq(mesh: &TriMesh, nodal: &[f64]) -> f64 {
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangles[t];
        let (_, area) = mesh.basis_gradients(t);
        let (ca, cb, cc) = (nodal[a], nodal[b], nodal[c]);
        let s = ca + cb + cc;
        acc += area / 12.0 * (s * s + ca * ca + cb * cb + cc * cc);
    }
    acc
}

/// Trapezoid weights on an arbitrary increasing stamp sequence (snapshot
/// strides make the last interval shorter than the others).
fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let half = 0.5 * (times[k + 1] - times[k]);
        w[k] += half;
        w[k + 1] += half;
    }
    w
}

/// Relative space-time L2 distance between a resolved trajectory on a
/// (possibly perforated, snapped) mesh and a limit trajectory on a plain
/// lattice mesh. The limit field is interpolated onto the resolved vertices,
/// the squared nodal difference is integrated exactly per element, and time
/// is handled by the trapezoid rule on the shared snapshot stamps.
pub fn l2_spacetime_error(
    resolved: &Trajectory,
    fine_mesh: &TriMesh,
    limit: &Trajectory,
    limit_mesh: &TriMesh,
) -> Result<f64> {
    let n = resolved.times.len();
    if n < 2 {
        return Err(Error::Evolution(
            "need at least two snapshots to compare trajectories".into(),
        ));
    }
    if limit.times.len() != n {
        return Err(Error::Evolution(format!(
            "snapshot counts differ: {} resolved vs {} limit",
            n,
            limit.times.len()
        )));
    }
    for (a, b) in resolved.times.iter().zip(&limit.times) {
        if (a - b).abs() > 1e-9 {
            return Err(Error::Evolution(format!(
                "snapshot stamps differ: {a} vs {b}; run both trajectories \
                 with the same time step and stride"
            )));
        }
    }
    let nv = fine_mesh.vertices.len();
    let weights = trapezoid_weights(&resolved.times);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut diff = vec![0.0; nv];
    let mut interp = vec![0.0; nv];
    for (k, &w) in weights.iter().enumerate() {
        let fine = &resolved.displacement[k];
        if fine.len() != nv {
            return Err(Error::Evolution(
                "resolved snapshot size does not match its mesh".into(),
            ));
        }
        let coarse = &limit.displacement[k];
        for (v, p) in fine_mesh.vertices.iter().enumerate() {
            interp[v] = limit_mesh.eval_p1(coarse, *p)?;
            diff[v] = fine[v] - interp[v];
        }
        num += w * p1_l2_sq(fine_mesh, &diff);
        den += w * p1_l2_sq(fine_mesh, &interp);
    }
    if den <= 0.0 {
        return Err(Error::Evolution(
            "limit trajectory vanishes; the relative error is undefined".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// One row of the error-vs-scale study.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub h: f64,
    pub dt: f64,
    pub dofs: usize,
    pub error: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// The acceptance bar: the error must drop at every scale refinement.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|p| p[1].error < p[0].error)
    }

    pub fn verdict(&self) -> &'static str {
        if self.monotone() {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

pub fn write_tensor_table(
    path: &Path,
    rows: &[([f64; 2], EffectiveTensor)],
    limit: &EffectiveTensor,
    limit_flux: &EffectiveTensor,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "scope,y1,y2,a11,a12,a21,a22")?;
    for (y, t) in rows {
        writeln!(
            out,
            "sample,{},{},{},{},{},{}",
            fmt_e12(y[0]),
            fmt_e12(y[1]),
            fmt_e12(t.a[0][0]),
            fmt_e12(t.a[0][1]),
            fmt_e12(t.a[1][0]),
            fmt_e12(t.a[1][1])
        )?;
    }
    for (scope, t) in [("limit", limit), ("limit_flux", limit_flux)] {
        writeln!(
            out,
            "{scope},,,{},{},{},{}",
            fmt_e12(t.a[0][0]),
            fmt_e12(t.a[0][1]),
            fmt_e12(t.a[1][0]),
            fmt_e12(t.a[1][1])
        )?;
    }
    Ok(())
}

pub fn write_energy_csv(path: &Path, log: &EnergyLog) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match &log.work_bound {
        Some(bound) => {
            writeln!(out, "t,energy,dissipation,work,work_bound")?;
            for k in 0..log.times.len() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_e12(log.times[k]),
                    fmt_e12(log.energy[k]),
                    fmt_e12(log.dissipation[k]),
                    fmt_e12(log.work[k]),
                    fmt_e12(bound[k])
                )?;
            }
        }
        None => {
            writeln!(out, "t,energy,dissipation,work")?;
            for k in 0..log.times.len() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_e12(log.times[k]),
                    fmt_e12(log.energy[k]),
                    fmt_e12(log.dissipation[k]),
                    fmt_e12(log.work[k])
                )?;
            }
        }
    }
    Ok(())
}

/// One VTK file per kept time level, named `<prefix>_<k>.vtk`.
pub fn write_snapshots(dir: &Path, prefix: &str, mesh: &TriMesh, traj: &Trajectory) -> Result<()> {
    for (k, t) in traj.times.iter().enumerate() {
        let path = dir.join(format!("{prefix}_{k:04}.vtk"));
        write_vtk(
            &path,
            &format!("t = {}", fmt_e12(*t)),
            mesh,
            &[
                ("displacement", &traj.displacement[k]),
                ("velocity", &traj.velocity[k]),
            ],
        )?;
    }
    Ok(())
}

/// `report.csv` (machine-friendly) and `report.dat` (aligned columns with
/// the verdict in a trailing comment). The wall-seconds column is the only
/// run-dependent output.
pub fn write_convergence(dir: &Path, report: &ConvergenceReport) -> Result<()> {
    let mut csv = BufWriter::new(File::create(dir.join("report.csv"))?);
    writeln!(csv, "epsilon,h,dt,dofs,error,wall_seconds")?;
    for r in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_e12(r.epsilon),
            fmt_e12(r.h),
            fmt_e12(r.dt),
            r.dofs,
            fmt_e12(r.error),
            fmt_e12(r.wall_seconds)
        )?;
    }
    drop(csv);

    let mut dat = BufWriter::new(File::create(dir.join("report.dat"))?);
    writeln!(
        dat,
        "# {:>18} {:>20} {:>20} {:>8} {:>20} {:>20}",
        "epsilon", "h", "dt", "dofs", "error", "wall_seconds"
    )?;
    for r in &report.rows {
        writeln!(
            dat,
            "  {:>18} {:>20} {:>20} {:>8} {:>20} {:>20}",
            fmt_e12(r.epsilon),
            fmt_e12(r.h),
            fmt_e12(r.dt),
            r.dofs,
            fmt_e12(r.error),
            fmt_e12(r.wall_seconds)
        )?;
    }
    writeln!(dat, "# verdict {}", report.verdict())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::EnergyLog;
    use crate::mesh::{build_cell_mesh, build_macro_mesh};
    use crate::model::{BoxDomain, HoleSpec};

    fn lattice(h: f64) -> TriMesh {
        build_macro_mesh(BoxDomain::unit(), h).unwrap().mesh
    }

    #[test]
    fn p1_square_integral_is_exact_for_linear_fields() {
        // integral of (2x - 3y + 1)^2 over the unit square is 4/3 (all the
        // cross terms cancel), and the per-element formula is exact on it
        let mesh = lattice(0.25);
        let nodal: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0)
            .collect();
        assert!((p1_l2_sq(&mesh, &nodal) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn p1_square_integral_handles_carved_meshes() {
        // constant 1 integrates to the perforated cell area
        let cell = build_cell_mesh(
            &HoleSpec::Disk {
                center: [0.5, 0.5],
                radius: 0.25,
            },
            1.0 / 64.0,
        )
        .unwrap();
        let ones = vec![1.0; cell.mesh.vertices.len()];
        let want = 1.0 - std::f64::consts::PI / 16.0;
        assert!((p1_l2_sq(&cell.mesh, &ones) - want).abs() < 1e-3);
    }

    #[test]
    fn trapezoid_weights_sum_to_the_span() {
        let times = [0.0, 0.1, 0.2, 0.25];
        let w = trapezoid_weights(&times);
        assert!((w.iter().sum::<f64>() - 0.25).abs() < 1e-15);
        assert!((w[3] - 0.025).abs() < 1e-15);
    }

    fn flat_trajectory(mesh: &TriMesh, times: &[f64], value: f64) -> Trajectory {
        let nodal = vec![value; mesh.vertices.len()];
        Trajectory {
            times: times.to_vec(),
            displacement: times.iter().map(|_| nodal.clone()).collect(),
            velocity: times
                .iter()
                .map(|_| vec![0.0; mesh.vertices.len()])
                .collect(),
            energy: EnergyLog {
                times: times.to_vec(),
                energy: vec![0.0; times.len()],
                dissipation: vec![0.0; times.len()],
                work: vec![0.0; times.len()],
                work_bound: None,
            },
        }
    }

    #[test]
    fn constant_trajectories_have_the_expected_relative_gap() {
        let fine = lattice(0.125);
        let coarse = lattice(0.25);
        let times = [0.0, 0.1, 0.2];
        let a = flat_trajectory(&fine, &times, 1.1);
        let b = flat_trajectory(&coarse, &times, 1.0);
        let e = l2_spacetime_error(&a, &fine, &b, &coarse).unwrap();
        assert!((e - 0.1 / 1.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn mismatched_stamps_are_rejected() {
        let mesh = lattice(0.25);
        let a = flat_trajectory(&mesh, &[0.0, 0.1], 1.0);
        let b = flat_trajectory(&mesh, &[0.0, 0.11], 1.0);
        assert!(l2_spacetime_error(&a, &mesh, &b, &mesh).is_err());
    }

    #[test]
    fn vanishing_limit_is_rejected() {
        let mesh = lattice(0.25);
        let a = flat_trajectory(&mesh, &[0.0, 0.1], 1.0);
        let b = flat_trajectory(&mesh, &[0.0, 0.1], 0.0);
        assert!(l2_spacetime_error(&a, &mesh, &b, &mesh).is_err());
    }
}
