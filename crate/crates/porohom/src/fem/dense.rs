//! Dense reference solvers. Slow but simple; the iterative paths are tested
//! against these on small systems.

use crate::{Error, Result};

/// Partial-pivot LU solve of a dense square system. Consumes its inputs.
pub fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.len();
    if b.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::Solver("dense system is not square".into()));
    }
    for k in 0..n {
        let (piv, max) = (k..n)
            .map(|r| (r, a[r][k].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if max < 1e-300 {
            return Err(Error::Solver(format!(
                "dense matrix is singular at elimination step {k}"
            )));
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            a[r][k] = 0.0;
            for c in k + 1..n {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k][c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok(x)
}

pub fn to_dense(sys: &crate::fem::SparseSystem) -> Vec<Vec<f64>> {
    let n = sys.dim();
    let mut a = vec![vec![0.0; n]; n];
    for r in 0..n {
        for k in sys.pattern.row_ptr[r]..sys.pattern.row_ptr[r + 1] {
            a[r][sys.pattern.cols[k]] = sys.values[k];
        }
    }
    a
}

/// Bordered-system oracle for the mean-constrained solve: factors the full
/// `(n+1) x (n+1)` saddle matrix `[[K, w], [w^T, 0]]` directly.
pub fn solve_mean_constrained_dense(
    sys: &crate::fem::SparseSystem,
    rhs: &[f64],
    weight: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = sys.dim();
    if rhs.len() != n || weight.len() != n {
        return Err(Error::Solver("dimension mismatch in bordered solve".into()));
    }
    let mut a = to_dense(sys);
    for (row, &wi) in a.iter_mut().zip(weight) {
        row.push(wi);
    }
    let mut last: Vec<f64> = weight.to_vec();
    last.push(0.0);
    a.push(last);
    let mut b = rhs.to_vec();
    b.push(0.0);
    let mut x = lu_solve(a, b)?;
    let lambda = x.pop().unwrap();
    Ok((x, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_reproduces_a_known_inverse() {
        // [[2,1],[1,3]] x = [3,5] has solution [4/5, 7/5]
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = lu_solve(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn pivoting_handles_a_zero_leading_entry() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let x = lu_solve(a, vec![2.0, 3.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrices_are_reported() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(lu_solve(a, vec![1.0, 1.0]).is_err());
    }
}
