//! Matrix exponential by scaling and squaring with Padé approximants
//! (degrees 3, 5, 7, 9, 13 selected on the 1-norm).

use crate::error::{Error, Result};
use crate::linalg::lu;
use crate::mat::Mat;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn axpy_into(acc: &mut Mat, k: f64, x: &Mat) {
    for i in 0..acc.rows() {
        for j in 0..acc.cols() {
            acc[(i, j)] += k * x[(i, j)];
        }
    }
}

/// Low-degree Padé approximant, `b.len() - 1` in {3, 5, 7, 9}.
fn pade_low(a: &Mat, b: &[f64]) -> Result<Mat> {
    let n = a.rows();
    let a2 = a * a;
    let mut powers = vec![Mat::identity(n), a2.clone()];
    let m = b.len() - 1;
    while powers.len() < m / 2 + 1 {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u_inner = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    for (k, coef) in b.iter().enumerate() {
        let p = &powers[k / 2];
        if k % 2 == 1 {
            axpy_into(&mut u_inner, *coef, p);
        } else {
            axpy_into(&mut v, *coef, p);
        }
    }
    let u = a * &u_inner;
    lu::solve(&(&v - &u), &(&v + &u))
}

fn pade13(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    let id = Mat::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;

    let mut w1 = a6.scale(b[13]);
    axpy_into(&mut w1, b[11], &a4);
    axpy_into(&mut w1, b[9], &a2);
    let mut w2 = &a6 * &w1;
    axpy_into(&mut w2, b[7], &a6);
    axpy_into(&mut w2, b[5], &a4);
    axpy_into(&mut w2, b[3], &a2);
    axpy_into(&mut w2, b[1], &id);
    let u = a * &w2;

    let mut z1 = a6.scale(b[12]);
    axpy_into(&mut z1, b[10], &a4);
    axpy_into(&mut z1, b[8], &a2);
    let mut v = &a6 * &z1;
    axpy_into(&mut v, b[6], &a6);
    axpy_into(&mut v, b[4], &a4);
    axpy_into(&mut v, b[2], &a2);
    axpy_into(&mut v, b[0], &id);

    lu::solve(&(&v - &u), &(&v + &u))
}

/// `exp(A)` for a square matrix.
pub fn expm(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::dim("expm", format!("non-square {:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("expm of a non-finite matrix".into()));
    }
    let norm = a.norm_1();
    if norm == 0.0 {
        return Ok(Mat::identity(a.rows()));
    }
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, b);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a.scale(0.5f64.powi(s));
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `exp(A t)`. Any finite `t` is accepted; negative values give the inverse flow.
pub fn mat_exp(a: &Mat, t: f64) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::dim("mat_exp", format!("non-square {:?}", a.shape())));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("mat_exp: t = {t}")));
    }
    expm(&a.scale(t))
}

/// `∫₀ʰ exp(F(h−θ)) G exp(Sθ) dθ`, read off the upper-right block of
/// `exp([[F, G], [0, S]] h)`.
pub fn exp_convolution(f: &Mat, g: &Mat, s: &Mat, h: f64) -> Result<Mat> {
    if !f.is_square() || !s.is_square() || g.rows() != f.rows() || g.cols() != s.rows() {
        return Err(Error::dim(
            "exp_convolution",
            format!(
                "F {:?}, G {:?}, S {:?}",
                f.shape(),
                g.shape(),
                s.shape()
            ),
        ));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "exp_convolution: h = {h} must be positive"
        )));
    }
    let (n, q) = g.shape();
    let mut big = Mat::zeros(n + q, n + q);
    big.set_block(0, 0, f);
    big.set_block(0, n, g);
    big.set_block(n, n, s);
    let e = mat_exp(&big, h)?;
    Ok(e.block(0, n, n, q))
}
