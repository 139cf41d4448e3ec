//! Numerical toolkit for damped wave propagation through a medium that is
//! periodic on two nested spatial scales and perforated by tiny holes.
//!
//! The pipeline has three stages:
//!
//! 1. `multiscale` solves corrector problems on the unit cells of both scales
//!    and produces the effective conductivity tensors of the limit medium.
//! 2. `evolution` integrates the limit equation on the macroscopic domain as
//!    well as the original fine-scale equation on a perforated mesh.
//! 3. `harness` compares the two solutions across a list of scale parameters
//!    and reports whether the fine-scale solution approaches the limit.
//!
//! Supporting layers: `model` (coefficient registry and structural checks),
//! `mesh` (structured simplex meshes of cells and perforated boxes), and
//! `fem` (P1 assembly and sparse solvers).

pub mod evolution;
pub mod fem;
pub mod harness;
pub mod mesh;
pub mod model;
pub mod multiscale;
pub mod util;

/// Crate-wide error type. `Config` maps to CLI exit code 2, everything else
/// to exit code 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("model validation failed: {0}")]
    Model(String),
    #[error("mesh construction failed: {0}")]
    Mesh(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("evolution failed: {0}")]
    Evolution(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Model(_) => 2,
            _ => 3,
        }
    }
}
