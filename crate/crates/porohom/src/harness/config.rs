//! Run configuration: a single JSON document holding the coefficient model,
//! the initial/boundary-value problem, and every discretization knob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{validate_model, CoefficientModel, ProblemData};
use crate::{Error, Result};

/// Per-axis sample count used for the assumption scan at config load time.
/// Coarse on purpose: the scan is a guard against sign and bound mistakes,
/// not a certification.
const VALIDATION_SAMPLES: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: CoefficientModel,
    pub problem: ProblemData,
    pub discretization: Discretization,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    /// Spacing of both unit-cell meshes.
    pub h_cell: f64,
    /// Spacing of the limit-problem mesh.
    pub h_macro: f64,
    /// Time step of the limit problem. Resolved runs ignore it and use
    /// `epsilon^2 / 20` so the fast time scale stays resolved.
    pub dt: f64,
    /// Oscillation scales for the resolved runs, strictly decreasing.
    pub epsilons: Vec<f64>,
    /// Certified lower density bound; the initial-velocity rescaling
    /// divides by `sqrt(rho)`.
    pub rho_min: f64,
    /// Per-axis resolution of the cell-average quadrature.
    pub quadrature_resolution: usize,
    /// Keep every n-th time level in trajectories and reports.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// Mesh cells per fine period in resolved runs:
    /// `h_eps = epsilon^2 / cells_per_period`.
    #[serde(default = "default_cells_per_period")]
    pub cells_per_period: usize,
    /// Abort instead of building a resolved mesh larger than this.
    #[serde(default = "default_max_vertices")]
    pub max_vertices: usize,
    /// Relative residual target of the iterative solvers.
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

fn default_stride() -> usize {
    1
}

fn default_cells_per_period() -> usize {
    8
}

fn default_max_vertices() -> usize {
    4_000_000
}

fn default_solver_tol() -> f64 {
    1e-11
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default)]
    pub write_vtk: bool,
    #[serde(default = "default_true")]
    pub write_csv: bool,
}

fn default_true() -> bool {
    true
}

impl Discretization {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("h_cell", self.h_cell),
            ("h_macro", self.h_macro),
            ("dt", self.dt),
            ("rho_min", self.rho_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "discretization.{name} must be positive, got {v}"
                )));
            }
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("discretization.epsilons is empty".into()));
        }
        for pair in self.epsilons.windows(2) {
            if !(pair[1] < pair[0]) {
                return Err(Error::Config(format!(
                    "epsilons must be strictly decreasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for &e in &self.epsilons {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("epsilon = {e} outside (0, 1)")));
            }
        }
        if self.quadrature_resolution < 8 {
            return Err(Error::Config(
                "quadrature_resolution must be at least 8".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        if self.cells_per_period < 8 {
            return Err(Error::Config(
                "cells_per_period must be at least 8 (one fine period needs \
                 that many cells to resolve the holes)"
                    .into(),
            ));
        }
        if self.max_vertices == 0 {
            return Err(Error::Config("max_vertices must be positive".into()));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-6) {
            return Err(Error::Config(format!(
                "solver_tol must lie in (0, 1e-6], got {}",
                self.solver_tol
            )));
        }
        Ok(())
    }

    /// Mesh spacing of the resolved run at a given oscillation scale.
    pub fn fine_spacing(&self, epsilon: f64) -> f64 {
        epsilon * epsilon / self.cells_per_period as f64
    }

    /// Time step of the resolved run at a given oscillation scale: the fast
    /// time period `epsilon^2` split into 20 steps, never coarser than the
    /// configured base step.
    pub fn fine_dt(&self, epsilon: f64) -> f64 {
        (epsilon * epsilon / 20.0).min(self.dt)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        validate_model(&self.model, VALIDATION_SAMPLES)?.into_result()?;
        self.problem.validate()?;
        self.discretization.validate()?;
        Ok(())
    }
}

/// Reads and validates a config file. All failures here are usage errors.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
