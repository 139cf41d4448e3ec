//! Jacobi-preconditioned conjugate gradients, plus an exact range-space
//! solver for the mean-constrained (pure-Neumann / periodic) saddle system.

use crate::fem::SparseSystem;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl LinearOperator for SparseSystem {
    fn dim(&self) -> usize {
        SparseSystem::dim(self)
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matvec(x, out);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// CG with a diagonal preconditioner. Converges when the residual drops
/// below `tol * ||b||`; a zero right-hand side returns the zero vector.
pub fn preconditioned_cg(
    op: &dyn LinearOperator,
    diag: &[f64],
    rhs: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.dim();
    if rhs.len() != n || diag.len() != n {
        return Err(Error::Solver(format!(
            "dimension mismatch: operator {n}, rhs {}, diag {}",
            rhs.len(),
            diag.len()
        )));
    }
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(v) if v.len() == n => v.to_vec(),
        Some(_) => return Err(Error::Solver("initial guess has wrong length".into())),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let res = norm2(&r);
        if res <= tol * b_norm {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: res / b_norm,
                },
            ));
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "operator is not positive definite on the search space (p.Ap = {pap})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "CG failed to converge in {max_iter} iterations (relative residual {:.3e})",
        norm2(&r) / b_norm
    )))
}

/// Solves `A x = b` for a matrix flagged positive definite.
pub fn solve_spd(
    system: &SparseSystem,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    if !system.spd {
        return Err(Error::Solver(
            "matrix is not flagged positive definite; use the constrained solver".into(),
        ));
    }
    let diag = system.diagonal();
    preconditioned_cg(system, &diag, rhs, None, tol, max_iter)
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub u: Vec<f64>,
    pub multiplier: f64,
    pub stats: SolveStats,
}

/// Singular symmetric `K` with a one-dimensional kernel of constants and a
/// weight vector `w` (`w . 1 != 0`): solves
///
/// ```text
/// K u + lambda w = b,   w . u = 0
/// ```
///
/// exactly via the rank-one augmentation `K_s = K + s w w^T`, which is
/// positive definite on the whole space. With `K_s x = b`, `K_s y = w` the
/// constrained solution is `u = x - mu y`, `lambda = mu = (w.x)/(w.y)`:
/// substituting back shows `K u + mu w = b` and `w.u = 0` hold identically,
/// so no penalty error is introduced.
pub fn solve_mean_constrained(
    system: &SparseSystem,
    rhs: &[f64],
    weight: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<ConstrainedSolution> {
    let n = system.dim();
    if rhs.len() != n || weight.len() != n {
        return Err(Error::Solver(format!(
            "dimension mismatch: matrix {n}, rhs {}, weight {}",
            rhs.len(),
            weight.len()
        )));
    }
    let w_sum: f64 = weight.iter().sum();
    if w_sum.abs() < 1e-12 {
        return Err(Error::Solver(
            "constraint weight annihilates constants; the augmented system is singular".into(),
        ));
    }
    let diag = system.diagonal();
    let b_sum: f64 = rhs.iter().sum();
    let b_norm = norm2(rhs);
    // A right-hand side whose implied solution scale `||b|| / mean(diag)` is
    // below solver resolution is assembly roundoff of a zero load; the
    // compatibility gate below cannot classify noise, so answer zero.
    let diag_scale = diag.iter().map(|d| d.abs()).sum::<f64>() / (n as f64);
    if b_norm <= 1e-13 * (n as f64).sqrt() * diag_scale {
        return Ok(ConstrainedSolution {
            u: vec![0.0; n],
            multiplier: 0.0,
            stats: SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        });
    }
    // b must be orthogonal to the kernel of K^T (constants) for the singular
    // system to be solvable without the multiplier absorbing a spurious
    // source; a violation means the load was mis-assembled
    if b_sum.abs() / (n as f64).sqrt() > 1e-8 * b_norm {
        return Err(Error::Solver(format!(
            "right-hand side is incompatible with the singular operator \
             (component along constants {:.3e} vs norm {:.3e})",
            b_sum.abs(),
            b_norm
        )));
    }
    let ww = dot(weight, weight);
    let sigma = diag.iter().sum::<f64>() / (n as f64) / ww;
    if !(sigma > 0.0) {
        return Err(Error::Solver("augmentation scale is not positive".into()));
    }

    struct Augmented<'a> {
        base: &'a SparseSystem,
        w: &'a [f64],
        sigma: f64,
    }
    impl LinearOperator for Augmented<'_> {
        fn dim(&self) -> usize {
            self.base.dim()
        }
        fn apply(&self, x: &[f64], out: &mut [f64]) {
            self.base.matvec(x, out);
            let wx = dot(self.w, x) * self.sigma;
            for (o, &wi) in out.iter_mut().zip(self.w) {
                *o += wx * wi;
            }
        }
    }

    let aug = Augmented {
        base: system,
        w: weight,
        sigma,
    };
    let aug_diag: Vec<f64> = diag
        .iter()
        .zip(weight)
        .map(|(&d, &wi)| d + sigma * wi * wi)
        .collect();
    let (x, stats_x) = preconditioned_cg(&aug, &aug_diag, rhs, None, tol, max_iter)?;
    let (y, stats_y) = preconditioned_cg(&aug, &aug_diag, weight, None, tol, max_iter)?;
    let wy = dot(weight, &y);
    if wy.abs() < 1e-300 {
        return Err(Error::Solver("constraint projection degenerated".into()));
    }
    let mu = dot(weight, &x) / wy;
    let u: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - mu * b).collect();
    Ok(ConstrainedSolution {
        u,
        multiplier: mu,
        stats: SolveStats {
            iterations: stats_x.iterations + stats_y.iterations,
            residual: stats_x.residual.max(stats_y.residual),
        },
    })
}
