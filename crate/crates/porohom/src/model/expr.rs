//! Closed registry of coefficient expressions.
//!
//! Periodic coefficients are restricted to families that are unit-periodic by
//! construction (integer trigonometric modes, equal-width laminate slabs,
//! checkerboard tiles), so periodicity never has to be verified numerically.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scalar field over a tuple of unit-periodic coordinates.
///
/// The coordinate slice it is evaluated on depends on the role: the density
/// reads the fine cell variable `z` (2 entries), the damping reads `(y, tau)`
/// (3 entries), conductivity scalars read the concatenation `(y, z)`
/// (4 entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum PeriodicScalar {
    Constant {
        value: f64,
    },
    /// Piecewise-constant in one coordinate: `values[k]` on the slab
    /// `[k/m, (k+1)/m)` where `m = values.len()`.
    Laminate {
        axis: usize,
        values: Vec<f64>,
    },
    /// `offset + sum of amplitude * cos(2 pi mode . u + phase)` with integer
    /// mode vectors.
    TrigPoly {
        offset: f64,
        terms: Vec<TrigTerm>,
    },
    /// `n x n` alternating tiles over two selected coordinates.
    Checkerboard {
        low: f64,
        high: f64,
        n: usize,
        #[serde(default = "default_axes")]
        axes: [usize; 2],
    },
}

fn default_axes() -> [usize; 2] {
    [0, 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    /// Integer frequency per coordinate; length must match the coordinate
    /// tuple the scalar is used with.
    pub mode: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

fn wrap_unit(u: f64) -> f64 {
    let w = u - u.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

impl PeriodicScalar {
    pub fn eval(&self, coords: &[f64]) -> f64 {
        match self {
            PeriodicScalar::Constant { value } => *value,
            PeriodicScalar::Laminate { axis, values } => {
                let w = wrap_unit(coords[*axis]);
                let m = values.len();
                let k = ((w * m as f64) as usize).min(m - 1);
                values[k]
            }
            PeriodicScalar::TrigPoly { offset, terms } => {
                let mut s = *offset;
                for t in terms {
                    let mut arg = t.phase;
                    for (k, &u) in t.mode.iter().zip(coords) {
                        arg += 2.0 * std::f64::consts::PI * (*k as f64) * u;
                    }
                    s += t.amplitude * arg.cos();
                }
                s
            }
            PeriodicScalar::Checkerboard { low, high, n, axes } => {
                let iu = (wrap_unit(coords[axes[0]]) * *n as f64) as usize;
                let iv = (wrap_unit(coords[axes[1]]) * *n as f64) as usize;
                if (iu.min(n - 1) + iv.min(n - 1)) % 2 == 0 {
                    *low
                } else {
                    *high
                }
            }
        }
    }

    /// Structural check against the coordinate dimension it will be used with.
    pub fn validate(&self, dim: usize, role: &str) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("{role}: {msg}")));
        match self {
            PeriodicScalar::Constant { value } => {
                if !value.is_finite() {
                    return fail("constant value must be finite".into());
                }
            }
            PeriodicScalar::Laminate { axis, values } => {
                if *axis >= dim {
                    return fail(format!("laminate axis {axis} out of range (dim {dim})"));
                }
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return fail("laminate values must be non-empty and finite".into());
                }
            }
            PeriodicScalar::TrigPoly { offset, terms } => {
                if !offset.is_finite() {
                    return fail("trig offset must be finite".into());
                }
                for t in terms {
                    if t.mode.len() != dim {
                        return fail(format!(
                            "trig mode length {} must equal coordinate dim {dim}",
                            t.mode.len()
                        ));
                    }
                    if !t.amplitude.is_finite() || !t.phase.is_finite() {
                        return fail("trig term parameters must be finite".into());
                    }
                }
            }
            PeriodicScalar::Checkerboard { low, high, n, axes } => {
                if *n == 0 {
                    return fail("checkerboard n must be >= 1".into());
                }
                if axes[0] >= dim || axes[1] >= dim || axes[0] == axes[1] {
                    return fail(format!("checkerboard axes {axes:?} invalid for dim {dim}"));
                }
                if !low.is_finite() || !high.is_finite() {
                    return fail("checkerboard levels must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Conservative lower/upper bounds of the range, used for fast
    /// assumption screening before pointwise sampling.
    pub fn bound_interval(&self) -> (f64, f64) {
        match self {
            PeriodicScalar::Constant { value } => (*value, *value),
            PeriodicScalar::Laminate { values, .. } => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            PeriodicScalar::TrigPoly { offset, terms } => {
                let spread: f64 = terms.iter().map(|t| t.amplitude.abs()).sum();
                (offset - spread, offset + spread)
            }
            PeriodicScalar::Checkerboard { low, high, .. } => (low.min(*high), low.max(*high)),
        }
    }

    /// True when the value varies with any of the coordinates `0..k`.
    pub fn depends_on_first(&self, k: usize) -> bool {
        match self {
            PeriodicScalar::Constant { .. } => false,
            PeriodicScalar::Laminate { axis, values } => *axis < k && values.len() > 1,
            PeriodicScalar::TrigPoly { terms, .. } => terms
                .iter()
                .any(|t| t.amplitude != 0.0 && t.mode.iter().take(k).any(|&m| m != 0)),
            PeriodicScalar::Checkerboard { axes, .. } => axes.iter().any(|&a| a < k),
        }
    }

    /// True when the value varies with any coordinate of index `>= k`.
    pub fn depends_on_tail(&self, k: usize) -> bool {
        match self {
            PeriodicScalar::Constant { .. } => false,
            PeriodicScalar::Laminate { axis, values } => *axis >= k && values.len() > 1,
            PeriodicScalar::TrigPoly { terms, .. } => terms
                .iter()
                .any(|t| t.amplitude != 0.0 && t.mode.iter().skip(k).any(|&m| m != 0)),
            PeriodicScalar::Checkerboard { axes, .. } => axes.iter().any(|&a| a >= k),
        }
    }
}

/// Symmetric conductivity matrix over the pair of cell variables `(y, z)`.
///
/// Scalars in the `Isotropic` and `Diagonal` families read the concatenated
/// tuple `(y1, y2, z1, z2)`. All families are symmetric by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum MatrixExpr {
    /// `A(y, z) = a(y) * b(z) * I`. The declared separability allows a single
    /// fine-cell solve to serve every `y`.
    SeparableIsotropic {
        a_of_y: PeriodicScalar,
        b_of_z: PeriodicScalar,
    },
    /// `A(y, z) = s(y, z) * I`.
    Isotropic { s: PeriodicScalar },
    /// `A(y, z) = diag(d_1(y, z), d_2(y, z))`.
    Diagonal { d: Vec<PeriodicScalar> },
}

impl MatrixExpr {
    pub fn eval(&self, y: [f64; 2], z: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            MatrixExpr::SeparableIsotropic { a_of_y, b_of_z } => {
                let s = a_of_y.eval(&y) * b_of_z.eval(&z);
                [[s, 0.0], [0.0, s]]
            }
            MatrixExpr::Isotropic { s } => {
                let c = [y[0], y[1], z[0], z[1]];
                let v = s.eval(&c);
                [[v, 0.0], [0.0, v]]
            }
            MatrixExpr::Diagonal { d } => {
                let c = [y[0], y[1], z[0], z[1]];
                [[d[0].eval(&c), 0.0], [0.0, d[1].eval(&c)]]
            }
        }
    }

    /// `Some((a_of_y, b_of_z))` when a single fine-cell solve can be reused
    /// across `y` (the matrix is `a(y) b(z) I`, or does not vary with `y` at
    /// all).
    pub fn separable_parts(&self) -> Option<(PeriodicScalar, PeriodicScalar)> {
        match self {
            MatrixExpr::SeparableIsotropic { a_of_y, b_of_z } => {
                Some((a_of_y.clone(), b_of_z.clone()))
            }
            _ => None,
        }
    }

    pub fn depends_on_y(&self) -> bool {
        match self {
            MatrixExpr::SeparableIsotropic { a_of_y, .. } => a_of_y.depends_on_first(2),
            MatrixExpr::Isotropic { s } => s.depends_on_first(2),
            MatrixExpr::Diagonal { d } => d.iter().any(|s| s.depends_on_first(2)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MatrixExpr::SeparableIsotropic { a_of_y, b_of_z } => {
                a_of_y.validate(2, "A.a_of_y")?;
                b_of_z.validate(2, "A.b_of_z")
            }
            MatrixExpr::Isotropic { s } => s.validate(4, "A.s"),
            MatrixExpr::Diagonal { d } => {
                if d.len() != 2 {
                    return Err(Error::Config("A.diagonal needs exactly 2 entries".into()));
                }
                for (k, s) in d.iter().enumerate() {
                    s.validate(4, &format!("A.d[{k}]"))?;
                }
                Ok(())
            }
        }
    }
}

/// Spatial factor of problem data, evaluated on the macroscopic box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum SpatialExpr {
    Constant {
        value: f64,
    },
    /// `amplitude * prod_i sin(modes_i * pi * (x_i - lo_i)/(hi_i - lo_i))`;
    /// vanishes on the box boundary, so it is admissible initial displacement.
    SinProduct {
        amplitude: f64,
        modes: [u32; 2],
    },
}

impl SpatialExpr {
    pub fn eval(&self, x: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
        match self {
            SpatialExpr::Constant { value } => *value,
            SpatialExpr::SinProduct { amplitude, modes } => {
                let mut v = *amplitude;
                for i in 0..2 {
                    let t = (x[i] - lo[i]) / (hi[i] - lo[i]);
                    v *= (modes[i] as f64 * std::f64::consts::PI * t).sin();
                }
                v
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SpatialExpr::Constant { value } => *value == 0.0,
            SpatialExpr::SinProduct { amplitude, .. } => *amplitude == 0.0,
        }
    }
}

/// Temporal factor of a source term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum TemporalExpr {
    Constant { value: f64 },
    Cosine { amplitude: f64, omega: f64 },
    Sine { amplitude: f64, omega: f64 },
}

impl TemporalExpr {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TemporalExpr::Constant { value } => *value,
            TemporalExpr::Cosine { amplitude, omega } => amplitude * (omega * t).cos(),
            TemporalExpr::Sine { amplitude, omega } => amplitude * (omega * t).sin(),
        }
    }
}

/// One separable source contribution `spatial(x) * temporal(t)`; the full
/// right-hand side is a sum of such terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceTerm {
    pub spatial: SpatialExpr,
    pub temporal: TemporalExpr,
}
