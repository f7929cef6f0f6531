use crate::mat::Mat;

/// Singular values in descending order, by one-sided Jacobi rotations.
///
/// Used for rank decisions, where squaring through `AᵀA` would lose the
/// small singular values.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    let work = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (m, n) = work.shape();
    // columns stored contiguously
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| work[(i, j)]).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank: singular values above `rel_tol * σ_max`.
pub fn rank(a: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_values() {
        let sv = singular_values(&Mat::diag(&[1.0, -4.0, 2.0]));
        assert_eq!(sv.len(), 3);
        assert!((sv[0] - 4.0).abs() < 1e-14 && (sv[1] - 2.0).abs() < 1e-14 && (sv[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wide_matrix_and_rank() {
        let a = Mat::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]);
        assert_eq!(rank(&a, 1e-9), 1);
        let sv = singular_values(&a);
        assert!((sv[0] - 70f64.sqrt()).abs() < 1e-12);
        assert_eq!(rank(&Mat::zeros(2, 2), 1e-9), 0);
        assert_eq!(rank(&Mat::identity(3), 1e-9), 3);
    }

    #[test]
    fn keeps_tiny_singular_value() {
        // σ_min = 1e-12 survives; through AᵀA it would be lost in rounding
        let a = Mat::diag(&[1.0, 1e-12]);
        let sv = singular_values(&a);
        assert!((sv[1] - 1e-12).abs() < 1e-24);
        assert_eq!(rank(&a, 1e-9), 1);
    }
}
