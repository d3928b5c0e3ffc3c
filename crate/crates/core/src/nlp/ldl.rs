//! Symmetric indefinite factorization `P A Pᵀ = L D Lᵀ` with threshold
//! Bunch-Kaufman pivoting.
//!
//! The matrix is reordered by reverse Cuthill-McKee with dense rows moved to
//! the end, copied into dense lower storage, and factored column by column.
//! Updates only touch the nonzero rows of each pivot column, so the cost
//! follows the profile of the reordered matrix rather than `n³`.
//! Interchanges are applied to the trailing matrix only and replayed during
//! the solve, as in LAPACK's `sytf2`/`sytrs`.

use std::collections::VecDeque;

use nalgebra::DVector;

use super::sparse::SymmetricSparse;
use super::NlpError;

/// Pivot acceptance threshold. The classical Bunch-Kaufman value
/// `(1 + √17) / 8` bounds element growth but interchanges so often on KKT
/// matrices that the banded profile fills in almost completely; a relaxed
/// threshold keeps pivots on the diagonal and solves are iteratively refined.
const ALPHA: f64 = 0.01;

/// Pivots below this fraction of the largest entry count as zero.
const ZERO_PIVOT: f64 = 1e-14;

/// Counts of positive, negative and zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
enum Pivot {
    One { d: f64, swap: usize, col: Vec<(usize, f64)> },
    /// Inverse of the 2×2 block stored as `(a, b, c)` for `[[a, b], [b, c]]`.
    Two { d_inv: (f64, f64, f64), swap: usize, col: Vec<(usize, f64, f64)> },
}

#[derive(Debug, Clone)]
pub struct SymmetricFactorization {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    pivots: Vec<Pivot>,
    inertia: Inertia,
    /// Original index of the first zero pivot.
    singular_at: Option<usize>,
}

struct Dense {
    n: usize,
    a: Vec<f64>,
}

impl Dense {
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.n + i]
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[j * self.n + i]
    }

    /// Lower-storage entry `(i, j)` for any order of indices.
    #[inline]
    fn sym(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.get(i, j)
        } else {
            self.get(j, i)
        }
    }

    /// Symmetric interchange of indices `p < q` within the trailing matrix
    /// starting at column `k`.
    fn swap(&mut self, k: usize, p: usize, q: usize) {
        if p == q {
            return;
        }
        let n = self.n;
        for j in k..p {
            self.a.swap(j * n + p, j * n + q);
        }
        for j in p + 1..q {
            self.a.swap(p * n + j, j * n + q);
        }
        for i in q + 1..n {
            self.a.swap(p * n + i, q * n + i);
        }
        self.a.swap(p * n + p, q * n + q);
    }
}

impl SymmetricFactorization {
    pub fn factor(a: &SymmetricSparse) -> Result<Self, NlpError> {
        let n = a.dim();
        let perm = ordering(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut m = Dense { n, a: vec![0.0; n * n] };
        for (r, c, v) in a.lower_entries() {
            if !v.is_finite() {
                return Err(NlpError::InvalidInput(format!("non-finite matrix entry at ({r}, {c})")));
            }
            let (i, j) = (inv[r], inv[c]);
            *m.at(i.max(j), i.min(j)) += v;
        }
        let zero_tol = ZERO_PIVOT * a.max_abs();
        let mut pivots = Vec::with_capacity(n);
        let mut inertia = Inertia::default();
        let mut singular_at = None;
        let mut nz: Vec<usize> = Vec::with_capacity(n);

        let mut k = 0;
        while k < n {
            let absakk = m.get(k, k).abs();
            let (mut imax, mut colmax) = (k, 0.0f64);
            for i in k + 1..n {
                let v = m.get(i, k).abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) <= zero_tol {
                inertia.zero += 1;
                singular_at.get_or_insert(perm[k]);
                pivots.push(Pivot::One { d: 0.0, swap: k, col: Vec::new() });
                k += 1;
                continue;
            }
            let two_by_two;
            let mut kp = k;
            if absakk >= ALPHA * colmax {
                two_by_two = false;
            } else {
                let mut rowmax = 0.0f64;
                for j in k..n {
                    if j != imax {
                        rowmax = rowmax.max(m.sym(imax, j).abs());
                    }
                }
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    two_by_two = false;
                } else if m.get(imax, imax).abs() >= ALPHA * rowmax {
                    two_by_two = false;
                    kp = imax;
                } else {
                    two_by_two = true;
                    kp = imax;
                }
            }

            if !two_by_two {
                m.swap(k, k, kp);
                let d = m.get(k, k);
                nz.clear();
                nz.extend((k + 1..n).filter(|&i| m.get(i, k) != 0.0));
                let col: Vec<(usize, f64)> = nz.iter().map(|&i| (i, m.get(i, k) / d)).collect();
                for (jj, &(j, lj)) in col.iter().enumerate() {
                    let s = lj * d;
                    for &(i, li) in &col[jj..] {
                        *m.at(i, j) -= li * s;
                    }
                }
                if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                pivots.push(Pivot::One { d, swap: kp, col });
                k += 1;
            } else {
                m.swap(k, k + 1, kp);
                let (a11, a21, a22) = (m.get(k, k), m.get(k + 1, k), m.get(k + 1, k + 1));
                let det = a11 * a22 - a21 * a21;
                let d_inv = (a22 / det, -a21 / det, a11 / det);
                nz.clear();
                nz.extend((k + 2..n).filter(|&i| m.get(i, k) != 0.0 || m.get(i, k + 1) != 0.0));
                let col: Vec<(usize, f64, f64)> = nz
                    .iter()
                    .map(|&i| {
                        let (x1, x2) = (m.get(i, k), m.get(i, k + 1));
                        (i, d_inv.0 * x1 + d_inv.1 * x2, d_inv.1 * x1 + d_inv.2 * x2)
                    })
                    .collect();
                for (jj, &(j, _, _)) in col.iter().enumerate() {
                    let (aj1, aj2) = (m.get(j, k), m.get(j, k + 1));
                    for &(i, w1, w2) in &col[jj..] {
                        *m.at(i, j) -= w1 * aj1 + w2 * aj2;
                    }
                }
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if a11 + a22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                pivots.push(Pivot::Two { d_inv, swap: kp, col });
                k += 2;
            }
        }
        Ok(Self { n, perm, pivots, inertia, singular_at })
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    /// Number of stored off-diagonal factor entries.
    pub fn factor_nnz(&self) -> usize {
        self.pivots
            .iter()
            .map(|p| match p {
                Pivot::One { col, .. } => col.len(),
                Pivot::Two { col, .. } => 2 * col.len(),
            })
            .sum()
    }

    pub fn is_singular(&self) -> bool {
        self.singular_at.is_some()
    }

    /// Original row index of the first zero pivot, if any.
    pub fn singular_row(&self) -> Option<usize> {
        self.singular_at
    }

    pub fn solve(&self, b: &[f64]) -> Result<DVector<f64>, NlpError> {
        if let Some(row) = self.singular_at {
            return Err(NlpError::SingularMatrix { row });
        }
        if b.len() != self.n {
            return Err(NlpError::DimensionMismatch { what: "right-hand side", expected: self.n, got: b.len() });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        let mut k = 0;
        for piv in &self.pivots {
            match piv {
                Pivot::One { d, swap, col } => {
                    x.swap(k, *swap);
                    let xk = x[k];
                    for &(i, l) in col {
                        x[i] -= l * xk;
                    }
                    x[k] = xk / d;
                    k += 1;
                }
                Pivot::Two { d_inv, swap, col } => {
                    x.swap(k + 1, *swap);
                    let (x1, x2) = (x[k], x[k + 1]);
                    for &(i, w1, w2) in col {
                        x[i] -= w1 * x1 + w2 * x2;
                    }
                    x[k] = d_inv.0 * x1 + d_inv.1 * x2;
                    x[k + 1] = d_inv.1 * x1 + d_inv.2 * x2;
                    k += 2;
                }
            }
        }
        for piv in self.pivots.iter().rev() {
            match piv {
                Pivot::One { swap, col, .. } => {
                    k -= 1;
                    let mut s = x[k];
                    for &(i, l) in col {
                        s -= l * x[i];
                    }
                    x[k] = s;
                    x.swap(k, *swap);
                }
                Pivot::Two { swap, col, .. } => {
                    k -= 2;
                    let (mut s1, mut s2) = (x[k], x[k + 1]);
                    for &(i, w1, w2) in col {
                        s1 -= w1 * x[i];
                        s2 -= w2 * x[i];
                    }
                    x[k] = s1;
                    x[k + 1] = s2;
                    x.swap(k + 1, *swap);
                }
            }
        }
        let mut out = DVector::zeros(self.n);
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        Ok(out)
    }
}

/// Reverse Cuthill-McKee on the graph of `a` with dense rows placed last.
fn ordering(a: &SymmetricSparse) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, v) in a.lower_entries() {
        if r != c && v != 0.0 {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    let dense_limit = (10.0 * (n as f64).sqrt()).max(16.0) as usize;
    let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_limit).collect();
    for l in adj.iter_mut() {
        l.retain(|&j| !dense[j]);
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    for l in adj.iter_mut() {
        l.sort_by_key(|&j| (degree[j], j));
    }

    let mut visited = dense.clone();
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    while let Some(start) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)) {
        let root = peripheral(start, &adj, &visited);
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order.extend((0..n).filter(|&i| dense[i]));
    order
}

/// Pseudo-peripheral node of the component containing `start` (George-Liu).
fn peripheral(start: usize, adj: &[Vec<usize>], blocked: &[bool]) -> usize {
    let mut root = start;
    let mut levels = bfs_levels(root, adj, blocked);
    let mut ecc = levels.iter().flatten().copied().max().unwrap_or(0);
    for _ in 0..8 {
        let Some(cand) = (0..adj.len())
            .filter(|&i| levels[i] == Some(ecc))
            .min_by_key(|&i| (adj[i].len(), i))
        else {
            break;
        };
        let cand_levels = bfs_levels(cand, adj, blocked);
        let cand_ecc = cand_levels.iter().flatten().copied().max().unwrap_or(0);
        if cand_ecc <= ecc {
            break;
        }
        root = cand;
        levels = cand_levels;
        ecc = cand_ecc;
    }
    root
}

fn bfs_levels(root: usize, adj: &[Vec<usize>], blocked: &[bool]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() && !blocked[w] {
                level[w] = Some(lv + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense_inertia(m: &DMatrix<f64>) -> Inertia {
        let eig = m.clone().symmetric_eigen();
        let mut out = Inertia::default();
        for &e in eig.eigenvalues.iter() {
            if e > 1e-10 {
                out.positive += 1;
            } else if e < -1e-10 {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }

    #[test]
    fn inertia_and_solution_of_saddle_point_matrix() {
        // [[H, Jᵀ], [J, 0]] with H = diag(2, 1, 3), J = [[1, 1, 0], [0, 1, 1]]
        let m = DMatrix::from_row_slice(
            5,
            5,
            &[
                2.0, 0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 1.0, 1.0, //
                0.0, 0.0, 3.0, 0.0, 1.0, //
                1.0, 1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 1.0, 0.0, 0.0,
            ],
        );
        let a = SymmetricSparse::from_dense(&m);
        let f = SymmetricFactorization::factor(&a).unwrap();
        assert_eq!(f.inertia(), Inertia { positive: 3, negative: 2, zero: 0 });
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = f.solve(&b).unwrap();
        let r = &m * &x - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-13, "{r}");
    }

    #[test]
    fn zero_diagonal_requires_two_by_two_pivot() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]);
        let f = SymmetricFactorization::factor(&SymmetricSparse::from_dense(&m)).unwrap();
        assert_eq!(f.inertia(), Inertia { positive: 1, negative: 1, zero: 0 });
        let x = f.solve(&[3.0, 6.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_indefinite_matches_dense_inertia() {
        let n = 30;
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                if i == j || next().abs() < 0.2 {
                    let v = next();
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        let f = SymmetricFactorization::factor(&SymmetricSparse::from_dense(&m)).unwrap();
        assert_eq!(f.inertia(), dense_inertia(&m));
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = f.solve(&b).unwrap();
        let r = &m * &x - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-10, "{}", r.amax());
    }
}
