use super::CollocationError;

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// Flipped Legendre-Gauss-Radau nodes on `(-1, 1]` and their weights.
///
/// The nodes are the negated roots of `P_{n-1} + P_n`; the weight of the
/// endpoint `+1` is `2/n²`, the others are `(1 + ξ) / (n² P_{n-1}(ξ)²)`.
/// Nodes are returned in increasing order.
pub fn lgr_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>), CollocationError> {
    if n == 0 {
        return Err(CollocationError::InvalidGrid("at least one node per interval is required".into()));
    }
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    // Roots of the classical (left) rule; the first is exactly -1.
    for j in 1..n {
        let mut x = -(2.0 * std::f64::consts::PI * j as f64 / (2.0 * nf - 1.0)).cos();
        for _ in 0..100 {
            let (pa, da) = legendre(n - 1, x);
            let (pb, db) = legendre(n, x);
            let dx = (pa + pb) / (da + db);
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (p_nm1, _) = legendre(n - 1, x);
        nodes.push(-x);
        weights.push((1.0 - x) / (nf * nf * p_nm1 * p_nm1));
    }
    nodes.push(1.0);
    weights.push(2.0 / (nf * nf));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    Ok((idx.iter().map(|&i| nodes[i]).collect(), idx.iter().map(|&i| weights[i]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_and_two_point_rules() {
        let (x, w) = lgr_nodes(1).unwrap();
        assert_eq!(x, vec![1.0]);
        assert_eq!(w, vec![2.0]);
        let (x, w) = lgr_nodes(2).unwrap();
        assert!((x[0] + 1.0 / 3.0).abs() < 1e-15 && x[1] == 1.0);
        assert!((w[0] - 1.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        assert!(lgr_nodes(0).is_err());
    }

    #[test]
    fn monomials_integrated_exactly() {
        for n in 1..=12 {
            let (x, w) = lgr_nodes(n).unwrap();
            for k in 0..=(2 * n - 2) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((q - exact).abs() < 1e-13, "n={n} k={k} err={}", q - exact);
            }
        }
    }
}
