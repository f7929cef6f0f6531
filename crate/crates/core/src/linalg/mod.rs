//! Dense linear-algebra kernels.

mod eig;
mod expm;
pub mod lu;
mod svd;
mod sylvester;

pub use eig::{eigenvalues, sigma_max, spectral_radius, Spectrum};
pub use expm::{exp_convolution, expm, mat_exp};
pub use svd::{rank, singular_values};
pub use sylvester::{
    check_separation, discrete_sylvester_residual, solve_discrete_sylvester, solve_sylvester,
    sylvester_residual, SEPARATION_TOL,
};

use crate::mat::Mat;

/// Kronecker product; block `(i, j)` is `a_ij · B`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = b.shape();
    Mat::from_fn(a.rows() * p, a.cols() * q, |r, c| {
        a[(r / p, c / q)] * b[(r % p, c % q)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_identity_cases() {
        let b = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(kron(&Mat::identity(2), &b), Mat::block_diag(&[b.clone(), b.clone()]));
        assert_eq!(kron(&b, &Mat::identity(1)), b);
    }
}
