//! Eigenvalues of dense real matrices: balancing, Householder reduction to
//! upper Hessenberg form, then Francis double-shift QR.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Eigenvalues of a real square matrix, with multiplicity.
///
/// Complex eigenvalues come in adjacent conjugate pairs. Ordering is by
/// descending real part, then descending imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(mut values: Vec<Complex64>) -> Self {
        values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        Self { values }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// Multiset union.
    pub fn union(&self, other: &Spectrum) -> Spectrum {
        let mut v = self.values.clone();
        v.extend_from_slice(&other.values);
        Spectrum::new(v)
    }

    /// Largest distance between matched eigenvalues, or `None` if the
    /// multiplicities differ in count.
    ///
    /// Both sides are sorted by modulus and each eigenvalue is paired greedily
    /// with the nearest unused one on the other side.
    pub fn match_distance(&self, other: &Spectrum) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        let mut left = self.values.clone();
        left.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let mut used = vec![false; other.len()];
        let mut worst: f64 = 0.0;
        for z in left {
            let (k, d) = other
                .values
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, w)| (k, (z - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            used[k] = true;
            worst = worst.max(d);
        }
        Some(worst)
    }
}

fn balance(a: &mut [Vec<f64>], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut().take(n) {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let norm: f64 = (k + 1..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k + 1][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        // left: rows k+1.., all columns from k
        for j in k..n {
            let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * a[k + 1 + t][j]).sum();
            let f = 2.0 * dot / vv;
            for (t, vt) in v.iter().enumerate() {
                a[k + 1 + t][j] -= f * vt;
            }
        }
        // right: columns k+1.., all rows
        for row in a.iter_mut().take(n) {
            let dot: f64 = v.iter().enumerate().map(|(t, vt)| vt * row[k + 1 + t]).sum();
            let f = 2.0 * dot / vv;
            for (t, vt) in v.iter().enumerate() {
                row[k + 1 + t] -= f * vt;
            }
        }
        for i in k + 2..n {
            a[i][k] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, 1-based storage.
fn hqr(a: &mut [Vec<f64>], n: usize, max_iter: usize) -> Result<Vec<Complex64>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let mut total = 0usize;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                let mut y = a[nu - 1][nu - 1];
                let mut w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                } else {
                    if total >= max_iter {
                        let residual = (2..=nu).map(|i| a[i][i - 1].abs()).fold(0.0, f64::max);
                        return Err(Error::NumericalFailure {
                            op: "eigenvalues",
                            residual,
                        });
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total += 1;
                    let mut m = nu - 2;
                    let mut z;
                    loop {
                        z = a[m][m];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - rr - ss;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for row in a.iter_mut().take(mmin + 1).skip(l) {
                                p = x * row[k] + y * row[k + 1];
                                if k != nu - 1 {
                                    p += z * row[k + 2];
                                    row[k + 2] -= p * r;
                                }
                                row[k + 1] -= p * q;
                                row[k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l as isize >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// All eigenvalues of a square matrix, at most `100 n` QR sweeps.
pub fn eigenvalues(a: &Mat) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::dim("eigenvalues", format!("non-square {:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("eigenvalues of a non-finite matrix".into()));
    }
    let n = a.rows();
    let mut w: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    balance(&mut w, n);
    hessenberg(&mut w, n);
    // shift to 1-based storage for the QR sweep
    let mut h = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = w[i][j];
        }
    }
    let vals = hqr(&mut h, n, 100 * n.max(1))?;
    Ok(Spectrum::new(vals))
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.max_modulus())
}

/// Largest singular value, as the square root of the top eigenvalue of `AᵀA`.
pub fn sigma_max(a: &Mat) -> Result<f64> {
    let ata = &a.transpose() * a;
    let top = eigenvalues(&ata)?
        .values()
        .iter()
        .map(|z| z.re)
        .fold(0.0, f64::max);
    Ok(top.sqrt())
}
