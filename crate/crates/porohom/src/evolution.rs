//! Second-order time integration for the damped wave systems.
//!
//! The average-acceleration member of the Newmark family (the trapezoidal
//! rule) is hard-wired: it is unconditionally stable and satisfies an exact
//! per-step energy identity
//!
//! ```text
//! E_{n+1} - E_n + dD_n = dW_n
//! E_n  = 1/2 v_n.M v_n + 1/2 d_n.K d_n
//! dD_n = dt/2 (C_n v_n + C_{n+1} v_{n+1}) . (v_n + v_{n+1}) / 2
//! dW_n = dt   (F_n + F_{n+1}) / 2 . (v_n + v_{n+1}) / 2
//! ```
//!
//! which the integrator logs step by step; any implementation defect shows
//! up as an identity violation far above roundoff.

use crate::fem::{
    assemble_load_scalar, assemble_mass, assemble_mass_into, assemble_stiffness, build_pattern,
    element_quadrature_points, preconditioned_cg, DofMap, QuadratureRule, SparseSystem,
};
use crate::mesh::PerforatedMesh;
use crate::model::{CoefficientModel, EffectiveScalars, ProblemData};
use crate::multiscale::EffectiveTensor;
use crate::{Error, Result};

const GAMMA: f64 = 0.5;
const BETA_N: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct NewmarkConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `snapshot_stride`-th state (plus the initial and final
    /// ones) in the trajectory.
    pub snapshot_stride: usize,
}

impl NewmarkConfig {
    pub fn new(dt: f64, t_final: f64, snapshot_stride: usize) -> Self {
        Self {
            dt,
            t_final,
            snapshot_stride,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot stride must be at least 1".into()));
        }
        if self.n_steps() == 0 {
            return Err(Error::Config(format!(
                "horizon {} is shorter than one step {}",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }
}

/// Per-step energy bookkeeping; `dissipation` and `work` are cumulative.
#[derive(Debug, Clone)]
pub struct EnergyLog {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub work: Vec<f64>,
    /// Cumulative Cauchy-Schwarz majorant of the work, when a bound spec
    /// was supplied.
    pub work_bound: Option<Vec<f64>>,
}

impl EnergyLog {
    /// Largest per-step relative violation of the discrete energy identity.
    pub fn identity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 1..self.energy.len() {
            let de = self.energy[n] - self.energy[n - 1];
            let dd = self.dissipation[n] - self.dissipation[n - 1];
            let dw = self.work[n] - self.work[n - 1];
            let scale = self.energy[n].abs()
                + self.energy[n - 1].abs()
                + dd.abs()
                + dw.abs()
                + f64::MIN_POSITIVE;
            worst = worst.max((de + dd - dw).abs() / scale);
        }
        worst
    }
}

/// Snapshots (nodal, boundary values included) plus the full-resolution
/// energy log.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub displacement: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
    pub energy: EnergyLog,
}

pub fn discrete_energy(d: &[f64], v: &[f64], mass: &SparseSystem, stiffness: &SparseSystem) -> f64 {
    0.5 * mass.quadratic_form(v) + 0.5 * stiffness.quadratic_form(d)
}

/// Damping operator over time. All matrices must share the pattern
/// allocation of the mass and stiffness (linear combinations demand it).
pub(crate) enum Damping<'a> {
    Constant(SparseSystem),
    /// Rebuilds `C(t)` into the provided workspace.
    TimeVarying {
        rebuild: Box<dyn Fn(f64, &mut SparseSystem) -> Result<()> + 'a>,
        workspace: SparseSystem,
    },
}

/// Optional work majorant: `|dW_n| <= dt (||f_n|| + ||f_{n+1}||) / 2 *
/// sqrt(v_mid . M1 v_mid)` with `M1` the unit-weight mass matrix and
/// `||f_t||` the quadrature norm of the source, so the chain is a genuine
/// Cauchy-Schwarz inequality in the discrete inner product.
pub(crate) struct WorkBound<'a> {
    pub unit_mass: SparseSystem,
    pub source_norm: Box<dyn Fn(f64) -> f64 + 'a>,
}

pub(crate) struct EvolutionSystem<'a> {
    pub mass: SparseSystem,
    pub stiffness: SparseSystem,
    pub damping: Damping<'a>,
    pub load: Box<dyn Fn(f64) -> Result<Vec<f64>> + 'a>,
    /// Reduced solution vector to nodal (snapshot) vector.
    pub expand: Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>,
    pub work_bound: Option<WorkBound<'a>>,
    pub solver_tol: f64,
}

fn check_finite(v: &[f64], what: &str, step: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Evolution(format!(
            "{what} became non-finite at step {step}"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn integrate(
    sys: &mut EvolutionSystem,
    d0: Vec<f64>,
    v0: Vec<f64>,
    cfg: &NewmarkConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = sys.mass.dim();
    if d0.len() != n || v0.len() != n || sys.stiffness.dim() != n {
        return Err(Error::Evolution(format!(
            "system dimensions disagree: mass {n}, stiffness {}, data {} / {}",
            sys.stiffness.dim(),
            d0.len(),
            v0.len()
        )));
    }
    let dt = cfg.dt;
    let n_steps = cfg.n_steps();
    let max_iter = 100 + 4 * n;

    let mass_diag = sys.mass.diagonal();

    // damping at a given time, as a borrow valid for the step
    let damping_at = |t: f64, damping: &mut Damping| -> Result<()> {
        if let Damping::TimeVarying { rebuild, workspace } = damping {
            rebuild(t, workspace)?;
        }
        Ok(())
    };
    fn current<'b>(damping: &'b Damping) -> &'b SparseSystem {
        match damping {
            Damping::Constant(c) => c,
            Damping::TimeVarying { workspace, .. } => workspace,
        }
    }

    // consistent initial acceleration: M a0 = F(0) - C(0) v0 - K d0
    let f0 = (sys.load)(0.0)?;
    if f0.len() != n {
        return Err(Error::Evolution("load vector has wrong length".into()));
    }
    damping_at(0.0, &mut sys.damping)?;
    let mut cv_prev = current(&sys.damping).matvec_alloc(&v0);
    let mut rhs = vec![0.0; n];
    let kd = sys.stiffness.matvec_alloc(&d0);
    for i in 0..n {
        rhs[i] = f0[i] - cv_prev[i] - kd[i];
    }
    let (mut a, _) =
        preconditioned_cg(&sys.mass, &mass_diag, &rhs, None, sys.solver_tol, max_iter)?;

    // for constant damping the implicit operator is fixed and assembled once
    let premixed = match &sys.damping {
        Damping::Constant(c) => {
            let mut s = SparseSystem::linear_combination(&[
                (1.0, &sys.mass),
                (GAMMA * dt, c),
                (BETA_N * dt * dt, &sys.stiffness),
            ])?;
            // positive combination of SPD mass and PSD damping/stiffness
            s.spd = true;
            Some(s)
        }
        Damping::TimeVarying { .. } => None,
    };

    let mut d = d0;
    let mut v = v0;
    let mut f_prev = f0;
    let mut norm_prev = sys
        .work_bound
        .as_ref()
        .map(|wb| (wb.source_norm)(0.0))
        .unwrap_or(0.0);

    let mut times = vec![0.0];
    let mut displacement = vec![(sys.expand)(&d)];
    let mut velocity = vec![(sys.expand)(&v)];
    let e0 = discrete_energy(&d, &v, &sys.mass, &sys.stiffness);
    let mut energy = EnergyLog {
        times: vec![0.0],
        energy: vec![e0],
        dissipation: vec![0.0],
        work: vec![0.0],
        work_bound: sys.work_bound.as_ref().map(|_| vec![0.0]),
    };

    for step in 0..n_steps {
        let t_next = (step + 1) as f64 * dt;
        damping_at(t_next, &mut sys.damping)?;

        let mut d_star = vec![0.0; n];
        let mut v_star = vec![0.0; n];
        for i in 0..n {
            d_star[i] = d[i] + dt * v[i] + dt * dt * (0.5 - BETA_N) * a[i];
            v_star[i] = v[i] + dt * (1.0 - GAMMA) * a[i];
        }

        let f_next = (sys.load)(t_next)?;
        let c_next = current(&sys.damping);
        let cv_star = c_next.matvec_alloc(&v_star);
        let kd_star = sys.stiffness.matvec_alloc(&d_star);
        for i in 0..n {
            rhs[i] = f_next[i] - cv_star[i] - kd_star[i];
        }

        let owned;
        let implicit = match &premixed {
            Some(s) => s,
            None => {
                let mut s = SparseSystem::linear_combination(&[
                    (1.0, &sys.mass),
                    (GAMMA * dt, c_next),
                    (BETA_N * dt * dt, &sys.stiffness),
                ])?;
                s.spd = true;
                owned = s;
                &owned
            }
        };
        let diag = implicit.diagonal();
        let (a_next, _) =
            preconditioned_cg(implicit, &diag, &rhs, Some(&a), sys.solver_tol, max_iter)?;

        let mut d_next = d_star;
        let mut v_next = v_star;
        for i in 0..n {
            d_next[i] += BETA_N * dt * dt * a_next[i];
            v_next[i] += GAMMA * dt * a_next[i];
        }
        check_finite(&d_next, "displacement", step + 1)?;
        check_finite(&v_next, "velocity", step + 1)?;

        let cv_next = current(&sys.damping).matvec_alloc(&v_next);
        let mut v_mid = vec![0.0; n];
        for i in 0..n {
            v_mid[i] = 0.5 * (v[i] + v_next[i]);
        }
        let dw = dt
            * v_mid
                .iter()
                .enumerate()
                .map(|(i, &vm)| vm * 0.5 * (f_prev[i] + f_next[i]))
                .sum::<f64>();
        let dd = dt
            * v_mid
                .iter()
                .enumerate()
                .map(|(i, &vm)| vm * 0.5 * (cv_prev[i] + cv_next[i]))
                .sum::<f64>();
        let e = discrete_energy(&d_next, &v_next, &sys.mass, &sys.stiffness);

        energy.times.push(t_next);
        energy.energy.push(e);
        energy
            .dissipation
            .push(energy.dissipation.last().unwrap() + dd);
        energy.work.push(energy.work.last().unwrap() + dw);
        if let (Some(wb), Some(log)) = (&sys.work_bound, energy.work_bound.as_mut()) {
            let norm_next = (wb.source_norm)(t_next);
            let vmv = dot(&v_mid, &wb.unit_mass.matvec_alloc(&v_mid)).max(0.0);
            let inc = dt * 0.5 * (norm_prev + norm_next) * vmv.sqrt();
            log.push(log.last().unwrap() + inc);
            norm_prev = norm_next;
        }

        d = d_next;
        v = v_next;
        a = a_next;
        f_prev = f_next;
        cv_prev = cv_next;

        if (step + 1) % cfg.snapshot_stride == 0 || step + 1 == n_steps {
            times.push(t_next);
            displacement.push((sys.expand)(&d));
            velocity.push((sys.expand)(&v));
        }
    }

    Ok(Trajectory {
        times,
        displacement,
        velocity,
        energy,
    })
}

/// Quadrature L2 norm of a scalar field over a mesh, consistent with the
/// assembly rule.
pub(crate) fn quadrature_l2_norm(
    mesh: &crate::mesh::TriMesh,
    quad: &QuadratureRule,
    f: &dyn Fn([f64; 2]) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        let (_, area) = mesh.basis_gradients(t);
        for (_, x, w) in element_quadrature_points(mesh, t, quad) {
            let v = f(x);
            acc += w * 2.0 * area * v * v;
        }
    }
    acc.sqrt()
}

fn nodal_data(
    mesh: &crate::mesh::TriMesh,
    dofmap: &DofMap,
    f: &dyn Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    let nodal: Vec<f64> = mesh.vertices.iter().map(|&x| f(x)).collect();
    dofmap.restrict(&nodal)
}

/// Integrates the limit equation
/// `m_rho u'' + m_beta u' - |Z*|^{-1} div(T grad u) = f` on the plain
/// domain mesh with zero boundary values, the initial velocity rescaled by
/// the density means.
pub fn solve_macro(
    scalars: &EffectiveScalars,
    tensor: &EffectiveTensor,
    problem: &ProblemData,
    mesh: &PerforatedMesh,
    cfg: &NewmarkConfig,
    solver_tol: f64,
) -> Result<Trajectory> {
    tensor.validate("limit tensor")?;
    if !(scalars.m_rho > 0.0) || !(scalars.z_star_measure > 0.0) {
        return Err(Error::Model(
            "limit equation needs positive mean density and cell volume".into(),
        ));
    }
    let tri = &mesh.mesh;
    let dofmap = DofMap::with_dirichlet(tri.vertices.len(), &mesh.dirichlet);
    let pattern = build_pattern(tri, &dofmap);
    let quad = QuadratureRule::degree2();

    let mass = assemble_mass(tri, &dofmap, &pattern, &quad, &|_| scalars.m_rho)?;
    let damping = assemble_mass(tri, &dofmap, &pattern, &quad, &|_| scalars.m_beta)?;
    let scaled = tensor.scaled(1.0 / scalars.z_star_measure).a;
    let stiffness = assemble_stiffness(tri, &dofmap, &pattern, &quad, &|_| scaled)?;
    let unit_mass = assemble_mass(tri, &dofmap, &pattern, &quad, &|_| 1.0)?;

    let d0 = nodal_data(tri, &dofmap, &|x| problem.eval_initial_displacement(x));
    let factor = scalars.initial_velocity_factor();
    let v0 = nodal_data(tri, &dofmap, &|x| factor * problem.eval_initial_velocity(x));

    let mut sys = EvolutionSystem {
        mass,
        stiffness,
        damping: Damping::Constant(damping),
        load: Box::new(|t| {
            assemble_load_scalar(tri, &dofmap, &quad, &|x| problem.eval_source(x, t))
        }),
        expand: Box::new(|r| dofmap.expand(r)),
        work_bound: Some(WorkBound {
            unit_mass,
            source_norm: Box::new(|t| {
                quadrature_l2_norm(tri, &quad, &|x| problem.eval_source(x, t))
            }),
        }),
        solver_tol,
    };
    integrate(&mut sys, d0, v0, cfg)
}

/// Integrates the oscillatory problem
/// `rho(x/e^2) u'' + beta(x/e, t/e^2) u' - div(A(x/e, x/e^2) grad u) = f`
/// on the perforated mesh, zero boundary values on the outer boundary and
/// natural conditions on the hole rims. The initial velocity is
/// `v0(x) / sqrt(rho(x/e^2))`, which requires the density to stay above
/// `rho_min` on this mesh.
pub fn solve_direct(
    model: &CoefficientModel,
    problem: &ProblemData,
    pmesh: &PerforatedMesh,
    cfg: &NewmarkConfig,
    rho_min: f64,
    solver_tol: f64,
) -> Result<Trajectory> {
    let eps = pmesh.epsilon;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!(
            "mesh does not carry an oscillation scale (epsilon = {eps})"
        )));
    }
    let dt_max = eps * eps / 20.0;
    if cfg.dt > dt_max + 1e-12 {
        return Err(Error::Config(format!(
            "time step {} under-resolves the fast time scale; need dt <= {dt_max:e}",
            cfg.dt
        )));
    }
    if !(rho_min > 0.0) {
        return Err(Error::Config(
            "pointwise initial-velocity scaling needs rho_min > 0".into(),
        ));
    }
    let tri = &pmesh.mesh;
    let dofmap = DofMap::with_dirichlet(tri.vertices.len(), &pmesh.dirichlet);
    let pattern = build_pattern(tri, &dofmap);
    let quad = QuadratureRule::degree2();
    let inv_eps = 1.0 / eps;
    let inv_eps2 = 1.0 / (eps * eps);

    let rho_at = |x: [f64; 2]| model.rho.eval(&[x[0] * inv_eps2, x[1] * inv_eps2]);
    // the pointwise velocity scaling divides by sqrt(rho); insist the
    // density really is bounded away from zero where it is sampled
    let mut rho_floor = f64::INFINITY;
    for t in 0..tri.triangles.len() {
        for (_, x, _) in element_quadrature_points(tri, t, &quad) {
            rho_floor = rho_floor.min(rho_at(x));
        }
    }
    for &x in &tri.vertices {
        rho_floor = rho_floor.min(rho_at(x));
    }
    if rho_floor < rho_min {
        return Err(Error::Model(format!(
            "density drops to {rho_floor} on the mesh, below the configured floor {rho_min}"
        )));
    }

    let mass = assemble_mass(tri, &dofmap, &pattern, &quad, &rho_at)?;
    let a_matrix = &model.a_matrix;
    let stiffness = assemble_stiffness(tri, &dofmap, &pattern, &quad, &|x| {
        a_matrix.eval(
            [x[0] * inv_eps, x[1] * inv_eps],
            [x[0] * inv_eps2, x[1] * inv_eps2],
        )
    })?;
    let unit_mass = assemble_mass(tri, &dofmap, &pattern, &quad, &|_| 1.0)?;

    let beta = &model.beta;
    let damping = if beta.depends_on_tail(2) {
        let template = SparseSystem::zeros(pattern.clone());
        let dofmap_ref = &dofmap;
        let quad_ref = &quad;
        Damping::TimeVarying {
            rebuild: Box::new(move |t, workspace| {
                let tau = t * inv_eps2;
                assemble_mass_into(workspace, tri, dofmap_ref, quad_ref, &|x| {
                    beta.eval(&[x[0] * inv_eps, x[1] * inv_eps, tau])
                })
            }),
            workspace: template,
        }
    } else {
        Damping::Constant(assemble_mass(tri, &dofmap, &pattern, &quad, &|x| {
            beta.eval(&[x[0] * inv_eps, x[1] * inv_eps, 0.0])
        })?)
    };

    let d0 = nodal_data(tri, &dofmap, &|x| problem.eval_initial_displacement(x));
    let v0 = nodal_data(tri, &dofmap, &|x| {
        problem.eval_initial_velocity(x) / rho_at(x).sqrt()
    });

    let mut sys = EvolutionSystem {
        mass,
        stiffness,
        damping,
        load: Box::new(|t| {
            assemble_load_scalar(tri, &dofmap, &quad, &|x| problem.eval_source(x, t))
        }),
        expand: Box::new(|r| dofmap.expand(r)),
        work_bound: Some(WorkBound {
            unit_mass,
            source_norm: Box::new(|t| {
                quadrature_l2_norm(tri, &quad, &|x| problem.eval_source(x, t))
            }),
        }),
        solver_tol,
    };
    integrate(&mut sys, d0, v0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_macro_mesh, build_perforated_mesh};
    use crate::model::{
        BoxDomain, HoleSpec, MatrixExpr, PeriodicScalar, SourceTerm, SpatialExpr, TemporalExpr,
        TrigTerm,
    };
    use std::sync::Arc;

    /// One-unknown system with mass `m`, damping `c`, stiffness `k`.
    fn scalar_system(m: f64, c: f64, k: f64) -> (SparseSystem, SparseSystem, SparseSystem) {
        let pattern = crate::fem::SparsePattern::from_cliques(1, vec![vec![0usize]]);
        let build = |v: f64, pattern: &Arc<crate::fem::SparsePattern>| {
            let mut s = SparseSystem::zeros(pattern.clone());
            s.add_at(0, 0, v);
            s.spd = v > 0.0;
            s
        };
        (build(m, &pattern), build(c, &pattern), build(k, &pattern))
    }

    fn run_oscillator(m: f64, c: f64, k: f64, d0: f64, v0: f64, cfg: &NewmarkConfig) -> Trajectory {
        let (mass, damping, stiffness) = scalar_system(m, c, k);
        let mut sys = EvolutionSystem {
            mass,
            stiffness,
            damping: Damping::Constant(damping),
            load: Box::new(|_| Ok(vec![0.0])),
            expand: Box::new(|r| r.to_vec()),
            work_bound: None,
            solver_tol: 1e-14,
        };
        integrate(&mut sys, vec![d0], vec![v0], cfg).unwrap()
    }

    #[test]
    fn damped_oscillator_matches_the_closed_form() {
        // m = 1, c = 0.2, k = 4, u(0) = 1, u'(0) = 0:
        // u(t) = e^{-t/10} (cos wd t + sin wd t / (10 wd)), wd = sqrt(3.99)
        let cfg = NewmarkConfig::new(1e-3, 10.0, 1);
        let traj = run_oscillator(1.0, 0.2, 4.0, 1.0, 0.0, &cfg);
        let sigma = 0.1;
        let wd = (4.0f64 - 0.01).sqrt();
        for (i, &t) in traj.times.iter().enumerate() {
            let exact = (-sigma * t).exp() * ((wd * t).cos() + sigma / wd * (wd * t).sin());
            assert!(
                (traj.displacement[i][0] - exact).abs() < 1e-3,
                "t = {t}: {} vs {exact}",
                traj.displacement[i][0]
            );
        }
        // at velocity sign changes the envelope is exact: |u| = e^{-sigma t}
        for i in 1..traj.times.len() - 1 {
            let v_prev = traj.velocity[i - 1][0];
            let v_next = traj.velocity[i + 1][0];
            if v_prev.signum() != v_next.signum() && v_prev.abs() > 1e-6 {
                let t = traj.times[i];
                let peak = traj.displacement[i][0].abs();
                assert!(
                    (peak - (-sigma * t).exp()).abs() < 1e-3,
                    "peak at t = {t}: {peak}"
                );
            }
        }
    }

    #[test]
    fn undamped_free_motion_conserves_energy() {
        let cfg = NewmarkConfig::new(1e-2, 10.0, 1000);
        let traj = run_oscillator(1.0, 0.0, 4.0, 1.0, 0.0, &cfg);
        let e0 = traj.energy.energy[0];
        assert!((e0 - 2.0).abs() < 1e-12);
        for &e in &traj.energy.energy {
            assert!((e - e0).abs() < 1e-10 * e0, "energy drifted to {e}");
        }
        assert!(traj.energy.identity_defect() < 1e-12);
    }

    #[test]
    fn damped_run_satisfies_the_energy_identity_with_varying_damping() {
        let mesh = build_macro_mesh(BoxDomain::unit(), 0.25).unwrap();
        let tri = &mesh.mesh;
        let dofmap = DofMap::with_dirichlet(tri.vertices.len(), &mesh.dirichlet);
        let pattern = build_pattern(tri, &dofmap);
        let quad = QuadratureRule::degree2();
        let mass = assemble_mass(tri, &dofmap, &pattern, &quad, &|_| 1.0).unwrap();
        let stiffness =
            assemble_stiffness(tri, &dofmap, &pattern, &quad, &|_| [[1.0, 0.0], [0.0, 1.0]])
                .unwrap();
        let workspace = SparseSystem::zeros(pattern.clone());
        let dm = &dofmap;
        let q = &quad;
        let mut sys = EvolutionSystem {
            mass,
            stiffness,
            damping: Damping::TimeVarying {
                rebuild: Box::new(move |t, w| {
                    let weight = 1.25 - 0.25 * (4.0 * std::f64::consts::PI * t).cos();
                    assemble_mass_into(w, tri, dm, q, &|_| weight)
                }),
                workspace,
            },
            load: Box::new(|t| {
                assemble_load_scalar(tri, &dofmap, &quad, &|x| (t + x[0]).sin() * x[1])
            }),
            expand: Box::new(|r| dofmap.expand(r)),
            work_bound: None,
            solver_tol: 1e-13,
        };
        let n = sys.mass.dim();
        let d0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 0.1).collect();
        let v0 = vec![0.0; n];
        let cfg = NewmarkConfig::new(0.01, 1.0, 10);
        let traj = integrate(&mut sys, d0, v0, &cfg).unwrap();
        assert!(
            traj.energy.identity_defect() < 1e-10,
            "identity defect {}",
            traj.energy.identity_defect()
        );
    }

    #[test]
    fn free_wave_is_time_reversible() {
        // run a free wave forward, flip the velocity, run again: the state
        // returns to the start because the trapezoidal rule is symmetric
        let mesh = build_macro_mesh(BoxDomain::unit(), 0.25).unwrap();
        let tri = &mesh.mesh;
        let dofmap = DofMap::with_dirichlet(tri.vertices.len(), &mesh.dirichlet);
        let pattern = build_pattern(tri, &dofmap);
        let quad = QuadratureRule::degree2();
        let run = |d0: Vec<f64>, v0: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            let mass = assemble_mass(tri, &dofmap, &pattern, &quad, &|_| 1.0).unwrap();
            let stiffness =
                assemble_stiffness(tri, &dofmap, &pattern, &quad, &|_| [[1.0, 0.0], [0.0, 1.0]])
                    .unwrap();
            let zero_damping = SparseSystem::zeros(pattern.clone());
            let mut sys = EvolutionSystem {
                mass,
                stiffness,
                damping: Damping::Constant(zero_damping),
                load: Box::new(|_| Ok(vec![0.0; dofmap.n_dofs])),
                expand: Box::new(|r| r.to_vec()),
                work_bound: None,
                solver_tol: 1e-14,
            };
            let cfg = NewmarkConfig::new(0.02, 1.0, 1000);
            let traj = integrate(&mut sys, d0, v0, &cfg).unwrap();
            (
                traj.displacement.last().unwrap().clone(),
                traj.velocity.last().unwrap().clone(),
            )
        };
        let n = dofmap.n_dofs;
        let d0: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64 - 6.0) / 20.0).collect();
        let v0: Vec<f64> = (0..n).map(|i| ((i * 5 % 11) as f64 - 5.0) / 30.0).collect();
        let (d1, v1) = run(d0.clone(), v0.clone());
        let flipped: Vec<f64> = v1.iter().map(|v| -v).collect();
        let (d2, v2) = run(d1, flipped);
        for i in 0..n {
            assert!(
                (d2[i] - d0[i]).abs() < 1e-8,
                "d[{i}]: {} vs {}",
                d2[i],
                d0[i]
            );
            assert!((v2[i] + v0[i]).abs() < 1e-8);
        }
    }

    fn fixture_problem() -> ProblemData {
        ProblemData {
            domain: BoxDomain::unit(),
            final_time: 0.05,
            source: vec![SourceTerm {
                spatial: SpatialExpr::SinProduct {
                    amplitude: 1.0,
                    modes: [1, 1],
                },
                temporal: TemporalExpr::Cosine {
                    amplitude: 1.0,
                    omega: 1.0,
                },
            }],
            initial_displacement: SpatialExpr::Constant { value: 0.0 },
            initial_velocity: SpatialExpr::Constant { value: 0.0 },
        }
    }

    fn plain_model() -> CoefficientModel {
        CoefficientModel {
            rho: PeriodicScalar::Constant { value: 1.0 },
            beta: PeriodicScalar::Constant { value: 1.0 },
            a_matrix: MatrixExpr::Isotropic {
                s: PeriodicScalar::Constant { value: 1.0 },
            },
            hole: HoleSpec::None,
            lambda_bound: 4.0,
            alpha: 0.5,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let scalars = EffectiveScalars {
            z_star_measure: 1.0,
            m_rho: 1.0,
            m_sqrt_rho: 1.0,
            m_beta: 1.0,
        };
        let problem = ProblemData {
            source: vec![],
            ..fixture_problem()
        };
        let mesh = build_macro_mesh(BoxDomain::unit(), 0.25).unwrap();
        let cfg = NewmarkConfig::new(0.01, 0.05, 1);
        let traj = solve_macro(
            &scalars,
            &EffectiveTensor::identity(),
            &problem,
            &mesh,
            &cfg,
            1e-12,
        )
        .unwrap();
        for d in &traj.displacement {
            assert!(d.iter().all(|&x| x == 0.0));
        }
        for e in &traj.energy.energy {
            assert_eq!(*e, 0.0);
        }
    }

    #[test]
    fn macro_work_bound_dominates_the_work() {
        let scalars = EffectiveScalars {
            z_star_measure: 1.0,
            m_rho: 1.0,
            m_sqrt_rho: 1.0,
            m_beta: 1.0,
        };
        let mesh = build_macro_mesh(BoxDomain::unit(), 0.125).unwrap();
        let cfg = NewmarkConfig::new(0.005, 0.25, 1);
        let traj = solve_macro(
            &scalars,
            &EffectiveTensor::identity(),
            &fixture_problem(),
            &mesh,
            &cfg,
            1e-12,
        )
        .unwrap();
        let bound = traj.energy.work_bound.as_ref().unwrap();
        for (w, b) in traj.energy.work.iter().zip(bound) {
            assert!(*w <= b + 1e-12, "work {w} exceeds bound {b}");
        }
        assert!(traj.energy.identity_defect() < 1e-10);
        // the source actually does something
        assert!(traj.energy.energy.last().unwrap() > &0.0);
    }

    #[test]
    fn direct_solver_guards_its_preconditions() {
        let model = plain_model();
        let problem = fixture_problem();
        let hole = HoleSpec::Disk {
            center: [0.5, 0.5],
            radius: 0.25,
        };
        let pmesh =
            build_perforated_mesh(BoxDomain::unit(), 0.5, &hole, 1.0 / 32.0, 1 << 22).unwrap();
        // dt above the fast-scale resolution limit epsilon^2 / 20
        let cfg = NewmarkConfig::new(0.02, 0.05, 1);
        let err = solve_direct(&model, &problem, &pmesh, &cfg, 1e-9, 1e-12).unwrap_err();
        assert!(format!("{err}").contains("fast time scale"));
        // a plain macro mesh carries no epsilon
        let plain = build_macro_mesh(BoxDomain::unit(), 0.25).unwrap();
        let cfg = NewmarkConfig::new(0.001, 0.05, 1);
        assert!(solve_direct(&model, &problem, &plain, &cfg, 1e-9, 1e-12).is_err());
    }

    #[test]
    fn direct_and_macro_agree_when_the_equations_coincide() {
        // constant unit coefficients and no holes: both solvers integrate
        // u'' + u' - div(grad u) = f on the same mesh, so the trajectories
        // must match to solver precision
        let model = plain_model();
        let problem = fixture_problem();
        let scalars = EffectiveScalars {
            z_star_measure: 1.0,
            m_rho: 1.0,
            m_sqrt_rho: 1.0,
            m_beta: 1.0,
        };
        let epsilon = 0.5;
        let pmesh = build_perforated_mesh(
            BoxDomain::unit(),
            epsilon,
            &HoleSpec::None,
            1.0 / 32.0,
            1 << 22,
        )
        .unwrap();
        let cfg = NewmarkConfig::new(0.0125, 0.05, 1);
        let direct = solve_direct(&model, &problem, &pmesh, &cfg, 1e-9, 1e-13).unwrap();
        let limit = solve_macro(
            &scalars,
            &EffectiveTensor::identity(),
            &problem,
            &pmesh,
            &cfg,
            1e-13,
        )
        .unwrap();
        assert_eq!(direct.times, limit.times);
        for (du, lu) in direct.displacement.iter().zip(&limit.displacement) {
            for (a, b) in du.iter().zip(lu) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn oscillating_damping_enters_through_the_fast_time() {
        // beta = 1 + sin^2(2 pi tau) / 2 with tau = t / eps^2; the damping
        // matrix must be rebuilt per step (constant damping would conserve
        // a different energy balance), and the identity still holds exactly
        let mut model = plain_model();
        model.beta = PeriodicScalar::TrigPoly {
            offset: 1.25,
            terms: vec![TrigTerm {
                amplitude: -0.25,
                // third coordinate is the fast time
                mode: vec![0, 0, 2],
                phase: 0.0,
            }],
        };
        let problem = fixture_problem();
        let pmesh =
            build_perforated_mesh(BoxDomain::unit(), 0.5, &HoleSpec::None, 1.0 / 32.0, 1 << 22)
                .unwrap();
        let cfg = NewmarkConfig::new(0.0125, 0.05, 2);
        let traj = solve_direct(&model, &problem, &pmesh, &cfg, 1e-9, 1e-13).unwrap();
        assert!(
            traj.energy.identity_defect() < 1e-10,
            "defect {}",
            traj.energy.identity_defect()
        );
        assert!(traj.energy.dissipation.last().unwrap() > &0.0);
    }

    #[test]
    fn config_rejections() {
        assert!(NewmarkConfig::new(0.0, 1.0, 1).validate().is_err());
        assert!(NewmarkConfig::new(0.1, 0.05, 1).validate().is_err());
        assert!(NewmarkConfig::new(0.1, 1.0, 0).validate().is_err());
        assert!(NewmarkConfig::new(0.1, 1.0, 1).validate().is_ok());
    }
}
