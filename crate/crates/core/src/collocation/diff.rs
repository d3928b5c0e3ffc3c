use nalgebra::DMatrix;

use super::CollocationError;

/// Barycentric weights `b_j = 1 / Π_{k≠j} (s_j − s_k)`.
pub fn barycentric_weights(support: &[f64]) -> Result<Vec<f64>, CollocationError> {
    let m = support.len();
    let mut b = vec![1.0; m];
    for j in 0..m {
        for k in 0..m {
            if k != j {
                let d = support[j] - support[k];
                if d == 0.0 {
                    return Err(CollocationError::DuplicatePoint { index: k.max(j), value: support[j] });
                }
                b[j] /= d;
            }
        }
    }
    Ok(b)
}

/// Differentiation matrix of the interpolating polynomial on `support`:
/// `(D v)_i = p'(s_i)` where `p` interpolates `v`. Diagonal entries are
/// the negative off-diagonal row sums, so constants are annihilated.
pub fn differentiation_matrix(support: &[f64]) -> Result<DMatrix<f64>, CollocationError> {
    let b = barycentric_weights(support)?;
    let m = support.len();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                let v = (b[j] / b[i]) / (support[i] - support[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    Ok(d)
}

/// Lagrange basis values at `t` in barycentric form; exact (a unit vector)
/// when `t` coincides with a support point.
pub fn lagrange_basis(support: &[f64], bary: &[f64], t: f64) -> Vec<f64> {
    if let Some(k) = support.iter().position(|&s| s == t) {
        let mut e = vec![0.0; support.len()];
        e[k] = 1.0;
        return e;
    }
    let terms: Vec<f64> = support.iter().zip(bary).map(|(s, b)| b / (t - s)).collect();
    let sum: f64 = terms.iter().sum();
    terms.into_iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_quadratic_on_three_points() {
        let s = [-1.0, -1.0 / 3.0, 1.0];
        let d = differentiation_matrix(&s).unwrap();
        let lin = d.clone() * nalgebra::DVector::from_column_slice(&s);
        let quad = d.clone() * nalgebra::DVector::from_iterator(3, s.iter().map(|x| x * x));
        for i in 1..3 {
            assert!((lin[i] - 1.0).abs() < 1e-14);
            assert!((quad[i] - 2.0 * s[i]).abs() < 1e-13);
        }
        for i in 0..3 {
            assert!(d.row(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            differentiation_matrix(&[0.0, 0.5, 0.5]),
            Err(CollocationError::DuplicatePoint { .. })
        ));
    }

    #[test]
    fn basis_is_exact_at_support() {
        let s = [0.0, 0.25, 1.0];
        let b = barycentric_weights(&s).unwrap();
        assert_eq!(lagrange_basis(&s, &b, 0.25), vec![0.0, 1.0, 0.0]);
        let l = lagrange_basis(&s, &b, 0.6);
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
