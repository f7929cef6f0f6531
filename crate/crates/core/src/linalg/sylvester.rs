//! Continuous and discrete Sylvester equations by Kronecker vectorization.
//!
//! The vectorized systems are `nq × nq` and solved densely, O((nq)³). That is
//! fine for the agent sizes handled here (nq ≤ 25 in the shipped scenarios)
//! and not meant for large systems.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, kron, lu::Lu};
use crate::mat::Mat;

/// Relative gap below which two eigenvalues count as shared.
pub const SEPARATION_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-10;

fn fmt_c(z: Complex64) -> String {
    format!("{:.6}{:+.6}i", z.re, z.im)
}

/// Errors if some `λ ∈ σ(a)` and `ν ∈ σ(b)` are closer than
/// [`SEPARATION_TOL`] (relative); otherwise returns the smallest gap.
pub fn check_separation(op: &'static str, a: &Mat, b: &Mat) -> Result<f64> {
    let sa = eigenvalues(a)?;
    let sb = eigenvalues(b)?;
    let mut best = f64::INFINITY;
    for &x in sa.values() {
        for &y in sb.values() {
            let d = (x - y).norm();
            let scale = 1.0f64.max(x.norm()).max(y.norm());
            if d <= SEPARATION_TOL * scale {
                return Err(Error::SingularEquation {
                    op,
                    left: fmt_c(x),
                    right: fmt_c(y),
                });
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

/// Solves `K vec(X) = vec(R)` with one step of iterative refinement.
fn solve_vectorized(op: &'static str, k: &Mat, rhs: &Mat, rows: usize, cols: usize) -> Result<Mat> {
    let lu = Lu::factor(k).map_err(|_| Error::SingularMatrix(op))?;
    let b = rhs.vec();
    let mut x = lu.solve_vec(&b);
    let kx = k.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&kx).map(|(b, kx)| b - kx).collect();
    let dx = lu.solve_vec(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
    Ok(Mat::unvec(&x, rows, cols))
}

/// Unique `Π` with `Π S = A Π + P`.
pub fn solve_sylvester(a: &Mat, s: &Mat, p: &Mat) -> Result<Mat> {
    if !a.is_square() || !s.is_square() || p.rows() != a.rows() || p.cols() != s.rows() {
        return Err(Error::dim(
            "solve_sylvester",
            format!("A {:?}, S {:?}, P {:?}", a.shape(), s.shape(), p.shape()),
        ));
    }
    check_separation("solve_sylvester", a, s)?;
    let (n, q) = p.shape();
    // (Sᵀ ⊗ I_n − I_q ⊗ A) vec(Π) = vec(P)
    let k = &kron(&s.transpose(), &Mat::identity(n)) - &kron(&Mat::identity(q), a);
    let pi = solve_vectorized("solve_sylvester", &k, p, n, q)?;
    let residual = sylvester_residual(a, s, p, &pi);
    if residual > RESIDUAL_TOL * (1.0 + p.norm_inf()) {
        return Err(Error::NumericalFailure {
            op: "solve_sylvester",
            residual,
        });
    }
    Ok(pi)
}

/// `‖Π S − A Π − P‖∞`.
pub fn sylvester_residual(a: &Mat, s: &Mat, p: &Mat, pi: &Mat) -> f64 {
    (&(&(pi * s) - &(a * pi)) - p).norm_inf()
}

/// Unique `X` with `M X − X J + N = 0`.
pub fn solve_discrete_sylvester(m: &Mat, j: &Mat, n: &Mat) -> Result<Mat> {
    if !m.is_square() || !j.is_square() || n.rows() != m.rows() || n.cols() != j.rows() {
        return Err(Error::dim(
            "solve_discrete_sylvester",
            format!("M {:?}, J {:?}, N {:?}", m.shape(), j.shape(), n.shape()),
        ));
    }
    check_separation("solve_discrete_sylvester", m, j)?;
    let (rows, cols) = n.shape();
    // (Jᵀ ⊗ I − I ⊗ M) vec(X) = vec(N)
    let k = &kron(&j.transpose(), &Mat::identity(rows)) - &kron(&Mat::identity(cols), m);
    let x = solve_vectorized("solve_discrete_sylvester", &k, n, rows, cols)?;
    let residual = discrete_sylvester_residual(m, j, n, &x);
    if residual > RESIDUAL_TOL * (1.0 + n.norm_inf()) {
        return Err(Error::NumericalFailure {
            op: "solve_discrete_sylvester",
            residual,
        });
    }
    Ok(x)
}

/// `‖M X − X J + N‖∞`.
pub fn discrete_sylvester_residual(m: &Mat, j: &Mat, n: &Mat, x: &Mat) -> f64 {
    (&(&(m * x) - &(x * j)) + n).norm_inf()
}
