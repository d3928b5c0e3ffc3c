use nalgebra::DMatrix;

use super::diff::{barycentric_weights, differentiation_matrix, lagrange_basis};
use super::lgr::lgr_nodes;
use super::CollocationError;

/// Mesh on the normalized interval `[0, 1]` with `n` flipped LGR nodes per
/// interval.
///
/// Points are numbered globally: point 0 is the left end, and point
/// `1 + k` is collocation node `k`. Interval `I` has support points
/// `I·n, …, I·n + n` (its left end followed by its nodes).
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    breakpoints: Vec<f64>,
    n: usize,
    ref_nodes: Vec<f64>,
    ref_weights: Vec<f64>,
    support: Vec<f64>,
    support_bary: Vec<f64>,
    node_bary: Vec<f64>,
    /// Rows for the `n` nodes of the `(n+1)`-point differentiation matrix.
    diff: DMatrix<f64>,
}

impl CollocationGrid {
    pub fn uniform(intervals: usize, nodes_per_interval: usize) -> Result<Self, CollocationError> {
        if intervals == 0 {
            return Err(CollocationError::InvalidGrid("at least one interval is required".into()));
        }
        let bps = (0..=intervals).map(|i| i as f64 / intervals as f64).collect();
        Self::from_breakpoints(bps, nodes_per_interval)
    }

    pub fn from_breakpoints(breakpoints: Vec<f64>, nodes_per_interval: usize) -> Result<Self, CollocationError> {
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(CollocationError::InvalidGrid("breakpoints must run from 0 to 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CollocationError::InvalidGrid("breakpoints must be strictly increasing".into()));
        }
        let (ref_nodes, ref_weights) = lgr_nodes(nodes_per_interval)?;
        let mut support = vec![-1.0];
        support.extend_from_slice(&ref_nodes);
        let support_bary = barycentric_weights(&support)?;
        let node_bary = barycentric_weights(&ref_nodes)?;
        let full = differentiation_matrix(&support)?;
        let diff = full.rows(1, nodes_per_interval).into_owned();
        Ok(Self { breakpoints, n: nodes_per_interval, ref_nodes, ref_weights, support, support_bary, node_bary, diff })
    }

    pub fn num_intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn nodes_per_interval(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.num_intervals() * self.n
    }

    pub fn num_points(&self) -> usize {
        1 + self.num_nodes()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Reference nodes on `(-1, 1]`.
    pub fn reference_nodes(&self) -> &[f64] {
        &self.ref_nodes
    }

    /// Reference weights (summing to 2).
    pub fn reference_weights(&self) -> &[f64] {
        &self.ref_weights
    }

    /// `n × (n+1)` differentiation matrix on the reference support
    /// `{-1} ∪ nodes`, evaluated at the nodes.
    pub fn differentiation(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// `(interval, local index)` of node `k`.
    pub fn node_location(&self, k: usize) -> (usize, usize) {
        (k / self.n, k % self.n)
    }

    /// Half the normalized width of interval `i`.
    pub fn half_width(&self, i: usize) -> f64 {
        0.5 * (self.breakpoints[i + 1] - self.breakpoints[i])
    }

    /// Normalized position of node `k` in `[0, 1]`.
    pub fn node_position(&self, k: usize) -> f64 {
        let (i, r) = self.node_location(k);
        self.map(i, self.ref_nodes[r])
    }

    /// Normalized position of point `p`.
    pub fn point_position(&self, p: usize) -> f64 {
        if p == 0 {
            0.0
        } else {
            self.node_position(p - 1)
        }
    }

    /// Quadrature weight of node `k` on the normalized interval.
    pub fn node_weight(&self, k: usize) -> f64 {
        let (i, r) = self.node_location(k);
        self.half_width(i) * self.ref_weights[r]
    }

    /// Local LGR weight of node `k` (the reference weight of its slot).
    pub fn local_weight(&self, k: usize) -> f64 {
        self.ref_weights[k % self.n]
    }

    fn map(&self, i: usize, xi: f64) -> f64 {
        if xi == 1.0 {
            return self.breakpoints[i + 1];
        }
        let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
        a + 0.5 * (xi + 1.0) * (b - a)
    }

    fn to_reference(&self, i: usize, s: f64) -> f64 {
        let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
        if s == b {
            return 1.0;
        }
        if s == a {
            return -1.0;
        }
        if let Some(&xi) = self.ref_nodes.iter().find(|&&xi| self.map(i, xi) == s) {
            return xi;
        }
        2.0 * (s - a) / (b - a) - 1.0
    }

    /// Interval containing normalized position `s`: the one with
    /// `s ∈ (a, b]`, or the first interval for `s = 0`.
    pub fn locate(&self, s: f64) -> Result<usize, CollocationError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(CollocationError::OutsideHorizon { s });
        }
        let i = self.breakpoints.partition_point(|&b| b < s);
        Ok(i.saturating_sub(1).min(self.num_intervals() - 1))
    }

    /// Interpolate values stored at points (left end plus nodes) at `s`.
    pub fn interpolate_points(&self, values: &[Vec<f64>], s: f64) -> Result<Vec<f64>, CollocationError> {
        let i = self.locate(s)?;
        let basis = lagrange_basis(&self.support, &self.support_bary, self.to_reference(i, s));
        Ok(combine(&basis, (0..=self.n).map(|j| &values[i * self.n + j])))
    }

    /// Interpolate values stored at nodes only at `s`. In the first
    /// interval this extrapolates to `s = 0`.
    pub fn interpolate_nodes(&self, values: &[Vec<f64>], s: f64) -> Result<Vec<f64>, CollocationError> {
        let i = self.locate(s)?;
        let basis = lagrange_basis(&self.ref_nodes, &self.node_bary, self.to_reference(i, s));
        Ok(combine(&basis, (0..self.n).map(|j| &values[i * self.n + j])))
    }
}

fn combine<'a>(basis: &[f64], vals: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (b, v) in basis.iter().zip(vals) {
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        if *b == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += b * x;
        }
    }
    out
}
