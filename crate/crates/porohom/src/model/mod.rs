//! Coefficient model of the two-scale porous medium and its structural
//! assumptions.
//!
//! A model bundles the density `rho(z)`, the damping `beta(y, tau)`, the
//! conductivity `A(y, z)` and the reference hole carved out of the fine unit
//! cell. The standing assumptions are
//!
//! * A1: `A` symmetric with `1/lambda |xi|^2 <= A xi . xi` and
//!   `|a_ij| <= lambda`,
//! * A2: `rho >= 0` and `beta >= alpha > 0`,
//! * A3: unit periodicity in every cell variable and positive mean density
//!   over the perforated cell.
//!
//! Periodicity holds by construction of the expression registry; the other
//! assumptions are checked pointwise on sample lattices.

mod expr;

pub use expr::{MatrixExpr, PeriodicScalar, SourceTerm, SpatialExpr, TemporalExpr, TrigTerm};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference hole `Theta` in the fine unit cell. Its closure must stay
/// strictly inside the open cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum HoleSpec {
    None,
    Disk { center: [f64; 2], radius: f64 },
    Square { center: [f64; 2], half_width: f64 },
}

impl HoleSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, HoleSpec::None)
    }

    /// Signed distance to the hole boundary, negative inside the hole.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            HoleSpec::None => f64::INFINITY,
            HoleSpec::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy).sqrt() - radius
            }
            HoleSpec::Square { center, half_width } => {
                let dx = (p[0] - center[0]).abs();
                let dy = (p[1] - center[1]).abs();
                dx.max(dy) - half_width
            }
        }
    }

    /// Closest point on the hole boundary; only meaningful near the hole.
    pub fn project_to_boundary(&self, p: [f64; 2]) -> [f64; 2] {
        match self {
            HoleSpec::None => p,
            HoleSpec::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                if r < 1e-14 {
                    return [center[0] + radius, center[1]];
                }
                [center[0] + dx / r * radius, center[1] + dy / r * radius]
            }
            HoleSpec::Square { center, half_width } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let w = *half_width;
                if dx.abs() >= dy.abs() {
                    let sx = if dx >= 0.0 { w } else { -w };
                    [center[0] + sx, center[1] + dy.clamp(-w, w)]
                } else {
                    let sy = if dy >= 0.0 { w } else { -w };
                    [center[0] + dx.clamp(-w, w), center[1] + sy]
                }
            }
        }
    }

    /// Exact hole area.
    pub fn measure(&self) -> f64 {
        match self {
            HoleSpec::None => 0.0,
            HoleSpec::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            HoleSpec::Square { half_width, .. } => 4.0 * half_width * half_width,
        }
    }

    /// Distance from the hole to the boundary of the unit cell `(0,1)^2`;
    /// negative when the hole pokes out.
    pub fn clearance(&self) -> f64 {
        let (center, reach) = match self {
            HoleSpec::None => return f64::INFINITY,
            HoleSpec::Disk { center, radius } => (center, *radius),
            HoleSpec::Square { center, half_width } => (center, *half_width),
        };
        let mut gap = f64::INFINITY;
        for i in 0..2 {
            gap = gap.min(center[i] - reach).min(1.0 - center[i] - reach);
        }
        gap
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HoleSpec::None => Ok(()),
            HoleSpec::Disk { radius, .. } if *radius <= 0.0 => {
                Err(Error::Config("hole radius must be positive".into()))
            }
            HoleSpec::Square { half_width, .. } if *half_width <= 0.0 => {
                Err(Error::Config("hole half_width must be positive".into()))
            }
            _ => {
                if self.clearance() <= 0.0 {
                    return Err(Error::Config(
                        "hole closure must stay strictly inside the unit cell".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Axis-aligned macroscopic domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl BoxDomain {
    pub fn unit() -> Self {
        BoxDomain {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        }
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..2 {
            if !(self.hi[i] - self.lo[i]).is_finite() || self.hi[i] <= self.lo[i] {
                return Err(Error::Config("domain box must have positive extent".into()));
            }
        }
        Ok(())
    }
}

/// Full coefficient model of the fine-scale medium.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientModel {
    /// Density over the fine cell variable `z`.
    pub rho: PeriodicScalar,
    /// Damping over `(y, tau)` (coarse cell variable and fast time).
    pub beta: PeriodicScalar,
    /// Conductivity over `(y, z)`.
    #[serde(rename = "A")]
    pub a_matrix: MatrixExpr,
    pub hole: HoleSpec,
    /// Ellipticity bound `lambda`: eigenvalues of `A` lie in
    /// `[1/lambda, lambda]` and entries are bounded by `lambda`.
    pub lambda_bound: f64,
    /// Uniform lower bound `alpha` of the damping.
    pub alpha: f64,
}

/// One assumption violation found while sampling a model.
#[derive(Clone, Debug)]
pub struct Violation {
    pub assumption: &'static str,
    pub detail: String,
    /// Coordinates of the offending sample.
    pub witness: Vec<f64>,
}

/// Outcome of `validate_model`.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, assumption: &'static str, detail: String, witness: Vec<f64>) {
        self.violations.push(Violation {
            assumption,
            detail,
            witness,
        });
    }

    /// Errors out on the first recorded violation; convenience for pipelines
    /// that have no use for a partial report.
    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Model(format!(
                "{} violated: {} at {:?}",
                v.assumption, v.detail, v.witness
            ))),
        }
    }
}

const BOUND_SLACK: f64 = 1e-9;

/// Samples the model on lattices of the cell variables and reports every
/// assumption violation found. `sample_count` is the per-axis lattice
/// density; points slightly inside and outside the hole boundary are added
/// so that jumps across the perforation are seen.
pub fn validate_model(model: &CoefficientModel, sample_count: usize) -> Result<ValidationReport> {
    if sample_count == 0 {
        return Err(Error::Config("sample_count must be >= 1".into()));
    }
    model.rho.validate(2, "rho")?;
    model.beta.validate(3, "beta")?;
    model.a_matrix.validate()?;
    model.hole.validate()?;
    if !(model.lambda_bound.is_finite() && model.lambda_bound >= 1.0) {
        return Err(Error::Config("lambda_bound must be finite and >= 1".into()));
    }
    if !(model.alpha.is_finite() && model.alpha > 0.0) {
        return Err(Error::Config("alpha must be finite and positive".into()));
    }

    let mut report = ValidationReport::default();
    let n = sample_count;
    let grid: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();

    // z samples: lattice plus offsets straddling the hole boundary.
    let mut z_samples: Vec<[f64; 2]> = Vec::new();
    for &u in &grid {
        for &v in &grid {
            z_samples.push([u, v]);
        }
    }
    if !model.hole.is_none() {
        for k in 0..4 * n {
            let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / (4 * n) as f64;
            let probe = model
                .hole
                .project_to_boundary([0.5 + 0.5 * angle.cos(), 0.5 + 0.5 * angle.sin()]);
            for off in [-1e-3, 1e-3] {
                let p = [
                    (probe[0] + off * angle.cos()).clamp(0.0, 1.0),
                    (probe[1] + off * angle.sin()).clamp(0.0, 1.0),
                ];
                z_samples.push(p);
            }
        }
    }

    // A2 for rho: nonnegative over the whole cell.
    for z in &z_samples {
        let r = model.rho.eval(z);
        if !(r >= -BOUND_SLACK) || !r.is_finite() {
            report.push("A2", format!("rho = {r} < 0"), z.to_vec());
        }
    }

    // A2 for beta: bounded below by alpha over (y, tau).
    'beta: for &y1 in &grid {
        for &y2 in &grid {
            for &tau in &grid {
                let b = model.beta.eval(&[y1, y2, tau]);
                if !(b >= model.alpha - BOUND_SLACK) || !b.is_finite() {
                    report.push(
                        "A2",
                        format!("beta = {b} < alpha = {}", model.alpha),
                        vec![y1, y2, tau],
                    );
                    if report.violations.len() > 32 {
                        break 'beta;
                    }
                }
            }
        }
    }

    // A1: symmetry, entry bound, eigenvalue range over (y, z) samples.
    let lambda = model.lambda_bound;
    'a1: for &y1 in &grid {
        for &y2 in &grid {
            for z in &z_samples {
                let a = model.a_matrix.eval([y1, y2], *z);
                let witness = vec![y1, y2, z[0], z[1]];
                if (a[0][1] - a[1][0]).abs() > BOUND_SLACK * lambda {
                    report.push("A1", "A not symmetric".into(), witness.clone());
                }
                let max_entry = a.iter().flatten().fold(0.0f64, |acc, &v| acc.max(v.abs()));
                if !(max_entry <= lambda + BOUND_SLACK) {
                    report.push(
                        "A1",
                        format!("entry bound |a_ij| = {max_entry} > lambda = {lambda}"),
                        witness.clone(),
                    );
                }
                let (emin, emax) = symmetric_eigen_range(a);
                if !(emin >= 1.0 / lambda - BOUND_SLACK && emax <= lambda + BOUND_SLACK) {
                    report.push(
                        "A1",
                        format!("eigenvalues [{emin}, {emax}] outside [1/lambda, lambda]"),
                        witness,
                    );
                }
                if report.violations.len() > 96 {
                    break 'a1;
                }
            }
        }
    }

    // A3: positive mean density over the perforated cell.
    let mut mass = 0.0;
    let mut cnt = 0usize;
    for z in &z_samples[..n * n] {
        if model.hole.signed_distance(*z) > 0.0 {
            mass += model.rho.eval(z);
            cnt += 1;
        }
    }
    if cnt == 0 || mass <= 0.0 {
        report.push(
            "A3",
            "mean density over the perforated cell is not positive".into(),
            vec![],
        );
    }

    // Hole geometry: strict interior containment.
    if !model.hole.is_none() && model.hole.clearance() <= 0.0 {
        report.push(
            "A3",
            format!(
                "hole clearance to cell boundary is {}",
                model.hole.clearance()
            ),
            vec![],
        );
    }

    Ok(report)
}

/// Eigenvalue range of a symmetric 2x2 matrix, closed form.
pub fn symmetric_eigen_range(a: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

/// Cell averages entering the limit equation. All three means are
/// normalized: the density means by the perforated-cell volume, the damping
/// mean by the (unit) volume of its cell cross period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveScalars {
    /// `|Z*|`, volume of the unit cell minus the hole.
    pub z_star_measure: f64,
    /// Mean of `rho` over the perforated cell.
    pub m_rho: f64,
    /// Mean of `sqrt(rho)` over the perforated cell.
    pub m_sqrt_rho: f64,
    /// Mean of `beta` over cell cross fast-time period.
    pub m_beta: f64,
}

impl EffectiveScalars {
    /// Factor rescaling the prescribed initial velocity for the limit
    /// problem.
    pub fn initial_velocity_factor(&self) -> f64 {
        self.m_sqrt_rho / self.m_rho
    }
}

/// Midpoint-quadrature cell averages. The hole is excluded by its indicator,
/// so the density means converge at the rate of the boundary-cell fraction.
pub fn compute_effective_scalars(
    model: &CoefficientModel,
    resolution: usize,
) -> Result<EffectiveScalars> {
    if resolution < 8 {
        return Err(Error::Config("quadrature resolution must be >= 8".into()));
    }
    let n = resolution;
    let mut inside = 0usize;
    let mut sum_rho = 0.0;
    let mut sum_sqrt = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            if model.hole.signed_distance(z) <= 0.0 {
                continue;
            }
            let r = model.rho.eval(&z);
            if r < 0.0 {
                return Err(Error::Model(format!("A2 violated: rho = {r} < 0 at {z:?}")));
            }
            inside += 1;
            sum_rho += r;
            sum_sqrt += r.sqrt();
        }
    }
    if inside == 0 {
        return Err(Error::Model(
            "A3 violated: perforated cell has no quadrature support".into(),
        ));
    }
    let z_star_measure = inside as f64 / (n * n) as f64;
    let m_rho = sum_rho / inside as f64;
    if m_rho <= 0.0 {
        return Err(Error::Model(
            "A3 violated: mean density over the perforated cell is not positive".into(),
        ));
    }

    // The damping mean runs over the full cell and period (no indicator),
    // so it gains nothing from hole-boundary resolution; cap its per-axis
    // rule to keep the triple loop from dominating at high `resolution`.
    let bn = n.min(512);
    let mut sum_beta = 0.0;
    for i in 0..bn {
        for j in 0..bn {
            for k in 0..bn {
                let c = [
                    (i as f64 + 0.5) / bn as f64,
                    (j as f64 + 0.5) / bn as f64,
                    (k as f64 + 0.5) / bn as f64,
                ];
                sum_beta += model.beta.eval(&c);
            }
        }
    }

    Ok(EffectiveScalars {
        z_star_measure,
        m_rho,
        m_sqrt_rho: sum_sqrt / inside as f64,
        m_beta: sum_beta / (bn * bn * bn) as f64,
    })
}

/// Macroscopic problem data: domain, horizon, source and Cauchy data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemData {
    pub domain: BoxDomain,
    pub final_time: f64,
    /// Sum of separable space-time terms.
    pub source: Vec<SourceTerm>,
    pub initial_displacement: SpatialExpr,
    pub initial_velocity: SpatialExpr,
}

impl ProblemData {
    pub fn eval_source(&self, x: [f64; 2], t: f64) -> f64 {
        self.source
            .iter()
            .map(|term| {
                term.spatial.eval(x, self.domain.lo, self.domain.hi) * term.temporal.eval(t)
            })
            .sum()
    }

    pub fn eval_initial_displacement(&self, x: [f64; 2]) -> f64 {
        self.initial_displacement
            .eval(x, self.domain.lo, self.domain.hi)
    }

    pub fn eval_initial_velocity(&self, x: [f64; 2]) -> f64 {
        self.initial_velocity
            .eval(x, self.domain.lo, self.domain.hi)
    }

    /// Structural checks: positive horizon, sane box, and the initial
    /// displacement vanishing on the boundary (sampled).
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.final_time.is_finite() && self.final_time > 0.0) {
            return Err(Error::Config("final_time must be positive".into()));
        }
        let m = 64;
        for k in 0..=m {
            let s = k as f64 / m as f64;
            let pts = [
                [
                    self.domain.lo[0] + s * (self.domain.hi[0] - self.domain.lo[0]),
                    self.domain.lo[1],
                ],
                [
                    self.domain.lo[0] + s * (self.domain.hi[0] - self.domain.lo[0]),
                    self.domain.hi[1],
                ],
                [
                    self.domain.lo[0],
                    self.domain.lo[1] + s * (self.domain.hi[1] - self.domain.lo[1]),
                ],
                [
                    self.domain.hi[0],
                    self.domain.lo[1] + s * (self.domain.hi[1] - self.domain.lo[1]),
                ],
            ];
            for p in pts {
                let v = self.eval_initial_displacement(p);
                if v.abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "initial displacement must vanish on the domain boundary; got {v} at {p:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}
