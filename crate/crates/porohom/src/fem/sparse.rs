//! Compressed-row symmetric sparse matrices with a shared pattern, so the
//! mass, damping and stiffness matrices of one discretization can be combined
//! entrywise.

use std::sync::Arc;

use crate::{Error, Result};

/// Sparsity pattern (row pointers plus sorted column indices), shared between
/// all matrices assembled on the same mesh and dof map.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
}

impl SparsePattern {
    /// Builds the pattern from vertex cliques (one per element, mapped to
    /// dof indices).
    pub fn from_cliques<I: IntoIterator<Item = Vec<usize>>>(n: usize, cliques: I) -> Arc<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for clique in cliques {
            for &r in &clique {
                for &c in &clique {
                    rows[r].push(c);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        Arc::new(SparsePattern { n, row_ptr, cols })
    }

    /// Index of `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.cols[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Symmetric sparse matrix. `spd` is the builder's claim that the matrix is
/// positive definite; the conjugate-gradient solver refuses systems without
/// it and double-checks curvature at runtime.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub pattern: Arc<SparsePattern>,
    pub values: Vec<f64>,
    pub symmetric: bool,
    pub spd: bool,
}

impl SparseSystem {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let nnz = pattern.nnz();
        SparseSystem {
            pattern,
            values: vec![0.0; nnz],
            symmetric: true,
            spd: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn add_at(&mut self, row: usize, col: usize, v: f64) {
        let k = self
            .pattern
            .position(row, col)
            .expect("entry outside the assembled pattern");
        self.values[k] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .position(row, col)
            .map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.pattern;
        for r in 0..p.n {
            let mut s = 0.0;
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                s += self.values[k] * x[p.cols[k]];
            }
            out[r] = s;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.matvec(x, &mut out);
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.get(r, r)).collect()
    }

    /// Quadratic form `x . A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.dim()];
        self.matvec(x, &mut ax);
        x.iter().zip(&ax).map(|(a, b)| a * b).sum()
    }

    /// `sum_k coeff_k * m_k` for matrices sharing one pattern.
    pub fn linear_combination(terms: &[(f64, &SparseSystem)]) -> Result<SparseSystem> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Assembly("empty linear combination".into()))?;
        let pattern = first.1.pattern.clone();
        for (_, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &pattern) {
                return Err(Error::Assembly(
                    "linear combination requires a shared sparsity pattern".into(),
                ));
            }
        }
        let mut values = vec![0.0; pattern.nnz()];
        for (c, m) in terms {
            for (v, &mv) in values.iter_mut().zip(&m.values) {
                *v += c * mv;
            }
        }
        Ok(SparseSystem {
            pattern,
            values,
            symmetric: terms.iter().all(|(_, m)| m.symmetric),
            spd: false,
        })
    }

    /// Largest relative asymmetry; 0 for an exactly symmetric matrix.
    pub fn asymmetry(&self) -> f64 {
        let p = &self.pattern;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..p.n {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.cols[k];
                scale = scale.max(self.values[k].abs());
                let mirrored = self.get(c, r);
                worst = worst.max((self.values[k] - mirrored).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}
