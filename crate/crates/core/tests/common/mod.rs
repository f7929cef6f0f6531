//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcorp::graph::Topology;
use sdcorp::linalg::solve_sylvester;
use sdcorp::{Exosystem, LeaderGraph, Mat, Plant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale))
}

/// Random matrix rescaled so that its infinity norm is `norm`.
pub fn random_with_norm(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> Mat {
    let m = random_mat(rng, n, n, 1.0);
    m.scale(norm / m.norm_inf().max(1e-300))
}

/// `Σ_{k<40} (A t)^k / k!`.
pub fn taylor_exp(a: &Mat, t: f64) -> Mat {
    let n = a.rows();
    let at = a.scale(t);
    let mut term = Mat::identity(n);
    let mut sum = Mat::identity(n);
    for k in 1..40 {
        term = (&term * &at).scale(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

/// Composite Simpson rule for `∫₀ʰ e^{F(h−θ)} G e^{Sθ} dθ` with `panels`
/// (even) panels; exponentials by the Taylor oracle.
pub fn simpson_convolution(f: &Mat, g: &Mat, s: &Mat, h: f64, panels: usize) -> Mat {
    assert!(panels % 2 == 0);
    let dt = h / panels as f64;
    // e^{F dt} and e^{S dt} stepped forward keep the cost linear in panels
    let ef_step = taylor_exp(f, dt);
    let es_step = taylor_exp(s, dt);
    let mut es = vec![Mat::identity(s.rows())];
    let mut ef = vec![Mat::identity(f.rows())];
    for _ in 0..panels {
        let next_s = es.last().unwrap() * &es_step;
        es.push(next_s);
        let next_f = ef.last().unwrap() * &ef_step;
        ef.push(next_f);
    }
    let mut acc = Mat::zeros(g.rows(), g.cols());
    for j in 0..=panels {
        let w = if j == 0 || j == panels {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let integrand = &(&ef[panels - j] * g) * &es[j];
        acc = &acc + &integrand.scale(w);
    }
    acc.scale(dt / 3.0)
}

/// Classic RK4 on `ẋ = M x` with `steps` equal steps over `t`.
pub fn rk4_linear(m: &Mat, x0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let dt = t / steps as f64;
    let mut x = x0.to_vec();
    let axpy = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    for _ in 0..steps {
        let k1 = m.mul_vec(&x);
        let k2 = m.mul_vec(&axpy(&x, &k1, dt / 2.0));
        let k3 = m.mul_vec(&axpy(&x, &k2, dt / 2.0));
        let k4 = m.mul_vec(&axpy(&x, &k3, dt));
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

/// Largest singular value from power iteration on `AᵀA`.
pub fn power_sigma_max(a: &Mat) -> f64 {
    let ata = &a.transpose() * a;
    let mut v = vec![1.0; ata.cols()];
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = ata.mul_vec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.iter().map(|x| x / norm).collect();
        lambda = norm;
    }
    lambda.sqrt()
}

/// Kronecker product by direct index enumeration.
pub fn kron_by_index(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = a.shape();
    let (p, q) = b.shape();
    let mut out = Mat::zeros(n * p, m * q);
    for i in 0..n {
        for j in 0..m {
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// ZOH network flow generator assembled block by block, state packed as
/// `[x_1, ξ_1, η_1, …, x_N, ξ_N, η_N, w]`.
pub fn zoh_flow_generator(plants: &[Plant], s: &Mat) -> Mat {
    let q = s.rows();
    let total: usize = plants.iter().map(|p| p.n() + p.m() + q).sum::<usize>() + q;
    let ow = total - q;
    let mut f = Mat::zeros(total, total);
    let mut o = 0;
    for p in plants {
        let (n, m) = (p.n(), p.m());
        for i in 0..n {
            for j in 0..n {
                f[(o + i, o + j)] = p.a[(i, j)];
            }
            for j in 0..m {
                f[(o + i, o + n + j)] = p.b[(i, j)];
            }
            for j in 0..q {
                f[(o + i, ow + j)] = p.p[(i, j)];
            }
        }
        for i in 0..q {
            for j in 0..q {
                f[(o + n + m + i, o + n + m + j)] = s[(i, j)];
            }
        }
        o += n + m + q;
    }
    for i in 0..q {
        for j in 0..q {
            f[(ow + i, ow + j)] = s[(i, j)];
        }
    }
    f
}

pub fn pack(state: &sdcorp::NetworkState) -> Vec<f64> {
    let mut v = Vec::new();
    for a in &state.agents {
        v.extend_from_slice(&a.x);
        v.extend_from_slice(&a.xi);
        v.extend_from_slice(&a.eta);
    }
    v.extend_from_slice(&state.w);
    v
}

/// Small random leader-follower problem: oscillator exosystem, `n ≤ 3`
/// single-input plants with `Q = −CΠ`, a random rooted digraph and a step
/// size drawn inside or outside the exact bound.
pub struct RandomScenario {
    pub plants: Vec<Plant>,
    pub exo: Exosystem,
    pub graph: LeaderGraph,
    pub h: f64,
    pub mu: f64,
}

pub fn random_scenario(rng: &mut ChaCha8Rng) -> RandomScenario {
    let n_agents = rng.gen_range(1..=4);
    let omega = rng.gen_range(0.5..2.0);
    let s = Mat::from_rows(&[[0.0, -omega], [omega, 0.0]]);
    let exo = Exosystem::new(s.clone(), vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .unwrap();
    let plants = (0..n_agents)
        .map(|_| {
            let n = rng.gen_range(1..=3);
            let a = random_mat(rng, n, n, 1.5);
            let b = random_mat(rng, n, 1, 1.0);
            let c = random_mat(rng, 1, n, 1.0);
            let p = random_mat(rng, n, 2, 1.0);
            let pi = solve_sylvester(&a, &s, &p).unwrap_or_else(|_| Mat::zeros(n, 2));
            let q = -&(&c * &pi);
            Plant::new(a, b, c, p, q).unwrap()
        })
        .collect();
    // spanning tree rooted at the leader plus a few extra edges
    let mut adj = Mat::zeros(n_agents + 1, n_agents + 1);
    for i in 1..=n_agents {
        let parent = rng.gen_range(0..i);
        adj[(i, parent)] = rng.gen_range(0.5..1.5);
        for j in 1..=n_agents {
            if j != i && rng.gen_bool(0.25) {
                adj[(i, j)] = rng.gen_range(0.5..1.5);
            }
        }
    }
    let graph = LeaderGraph::new(adj, Topology::Directed).unwrap();
    let bound = graph.decompose().exact_mu_bound().unwrap();
    let mu = if rng.gen_bool(0.6) {
        bound * rng.gen_range(0.2..0.8)
    } else {
        bound * rng.gen_range(1.3..2.2)
    };
    RandomScenario {
        plants,
        exo,
        graph,
        h: rng.gen_range(0.05..0.3),
        mu,
    }
}
