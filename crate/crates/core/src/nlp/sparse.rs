use nalgebra::{DMatrix, DVector};

use super::ldl::SymmetricFactorization;
use super::NlpError;

/// Coordinate-format sparse matrix. Duplicate entries are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        for ((&i, &j), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[i] += v * x[j];
        }
        y
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> DVector<f64> {
        let mut y = DVector::zeros(self.ncols);
        for ((&i, &j), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[j] += v * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for ((&i, &j), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            m[(i, j)] += v;
        }
        m
    }

    /// Structural pattern, for checking that it stays fixed.
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        self.rows.iter().copied().zip(self.cols.iter().copied()).collect()
    }
}

/// Symmetric sparse matrix stored as its lower triangle in compressed
/// columns, with sorted row indices and no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparse {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricSparse {
    /// Build from triplets of either triangle; `(i, j)` and `(j, i)` refer to
    /// the same entry and are summed.
    pub fn from_triplets(n: usize, t: &Triplets) -> Self {
        let mut counts = vec![0usize; n + 1];
        for (&i, &j) in t.rows.iter().zip(&t.cols) {
            counts[i.min(j) + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); t.nnz()];
        for ((&i, &j), &v) in t.rows.iter().zip(&t.cols).zip(&t.vals) {
            let (r, c) = (i.max(j), i.min(j));
            entries[next[c]] = (r, v);
            next[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        col_ptr.push(0);
        for c in 0..n {
            let seg = &mut entries[counts[c]..counts[c + 1]];
            seg.sort_by_key(|e| e.0);
            for &(r, v) in seg.iter() {
                if row_idx.len() > col_ptr[c] && *row_idx.last().unwrap() == r {
                    *vals.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    vals.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { n, col_ptr, row_idx, vals }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut t = Triplets::new(n, n);
        for j in 0..n {
            for i in j..n {
                if m[(i, j)] != 0.0 {
                    t.push(i, j, m[(i, j)]);
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_lower(&self) -> usize {
        self.vals.len()
    }

    /// Iterate `(row, col, value)` over the stored lower triangle.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.vals[k]))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for (r, c, v) in self.lower_entries() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.lower_entries() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }
}

fn rel_residual(a: &SymmetricSparse, x: &DVector<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let r = b - a.mul_vec(x.as_slice());
    let bn = b.amax();
    let rel = if bn > 0.0 { r.amax() / bn } else { r.amax() };
    (r, rel)
}

/// Solve `A x = b` for symmetric indefinite sparse `A` with iterative
/// refinement. Fails if `A` is singular (reporting the pivot) or if the
/// relative residual `‖Ax − b‖∞ / ‖b‖∞` cannot be brought below `1e-10`.
pub fn solve_kkt_linear(a: &SymmetricSparse, b: &[f64]) -> Result<DVector<f64>, NlpError> {
    if b.len() != a.dim() {
        return Err(NlpError::DimensionMismatch { what: "right-hand side", expected: a.dim(), got: b.len() });
    }
    let fact = SymmetricFactorization::factor(a)?;
    fact.solve_refined(a, b, 1e-10)
}

impl SymmetricFactorization {
    /// Solve with up to a few steps of iterative refinement; errors if the
    /// final relative residual exceeds `tolerance`.
    pub fn solve_refined(&self, a: &SymmetricSparse, b: &[f64], tolerance: f64) -> Result<DVector<f64>, NlpError> {
        let (x, res) = self.solve_refined_unchecked(a, b, 6)?;
        if !(res <= tolerance) {
            return Err(NlpError::InaccurateSolve { residual: res, tolerance });
        }
        Ok(x)
    }

    /// Solve with iterative refinement, returning the achieved relative
    /// residual instead of checking it.
    pub fn solve_refined_unchecked(
        &self,
        a: &SymmetricSparse,
        b: &[f64],
        max_steps: usize,
    ) -> Result<(DVector<f64>, f64), NlpError> {
        let bv = DVector::from_column_slice(b);
        let mut x = self.solve(b)?;
        let (mut r, mut res) = rel_residual(a, &x, &bv);
        for _ in 0..max_steps {
            if res <= 1e-15 {
                break;
            }
            let dx = self.solve(r.as_slice())?;
            let cand = &x + dx;
            let (rc, resc) = rel_residual(a, &cand, &bv);
            if !(resc < res) {
                break;
            }
            x = cand;
            r = rc;
            res = resc;
        }
        Ok((x, res))
    }
}
