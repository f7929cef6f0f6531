use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::graph::LeaderGraph;
use crate::linalg::{eigenvalues, rank, Spectrum};
use crate::mat::Mat;
use crate::regulator::{check_agents, AssumptionFlags, Exosystem, Plant};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-9;
const A1_TOL: f64 = 1e-10;
const PATHOLOGY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    pub detail: String,
}

impl AssumptionCheck {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    #[serde(rename = "A1")]
    pub a1: AssumptionCheck,
    #[serde(rename = "A2")]
    pub a2: AssumptionCheck,
    #[serde(rename = "A3")]
    pub a3: AssumptionCheck,
    #[serde(rename = "A4")]
    pub a4: AssumptionCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.a1.passed && self.a2.passed && self.a3.passed && self.a4.passed
    }

    pub fn flags(&self) -> AssumptionFlags {
        AssumptionFlags {
            a1: Some(self.a1.passed),
            a2: Some(self.a2.passed),
            a3: Some(self.a3.passed),
            a4: Some(self.a4.passed),
        }
    }

    pub fn failed_details(&self) -> Vec<String> {
        [
            ("A1", &self.a1),
            ("A2", &self.a2),
            ("A3", &self.a3),
            ("A4", &self.a4),
        ]
        .into_iter()
        .filter(|(_, c)| !c.passed)
        .map(|(n, c)| format!("{n}: {}", c.detail))
        .collect()
    }
}

/// Real `2k × 2l` embedding of a complex matrix `re + i·im`; its rank is
/// twice the complex rank.
pub(crate) fn complex_embedding(re: &Mat, im: &Mat) -> Mat {
    let (r, c) = re.shape();
    let mut out = Mat::zeros(2 * r, 2 * c);
    out.set_block(0, 0, re);
    out.set_block(0, c, &-im);
    out.set_block(r, 0, im);
    out.set_block(r, c, re);
    out
}

/// Rank of `[A − λI, B]` over ℂ; `B` may have any column count.
pub(crate) fn pbh_rank(a: &Mat, b: &Mat, lambda: Complex64) -> usize {
    let n = a.rows();
    let re = Mat::hstack(&[&(a - &Mat::identity(n).scale(lambda.re)), b]).expect("PBH shape");
    let mut im = Mat::zeros(n, n + b.cols());
    for i in 0..n {
        im[(i, i)] = -lambda.im;
    }
    rank(&complex_embedding(&re, &im), RANK_TOL) / 2
}

pub(crate) fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.rows();
    let mut blocks = vec![b.clone()];
    for _ in 1..n {
        let next = a * blocks.last().unwrap();
        blocks.push(next);
    }
    let refs: Vec<&Mat> = blocks.iter().collect();
    Mat::hstack(&refs).expect("controllability blocks share rows")
}

/// Pairs of eigenvalues with equal real parts whose imaginary parts differ by
/// a nonzero multiple of `2π/h`.
fn pathological_pairs(eigs: &[Complex64], h: f64) -> Vec<(Complex64, Complex64)> {
    let period = 2.0 * PI / h;
    let mut hits = Vec::new();
    for (i, x) in eigs.iter().enumerate() {
        for y in &eigs[i + 1..] {
            let same_real = (x.re - y.re).abs() <= PATHOLOGY_TOL * (1.0 + x.re.abs().max(y.re.abs()));
            if !same_real {
                continue;
            }
            let ratio = (x.im - y.im) / period;
            let k = ratio.round();
            if k != 0.0 && (ratio - k).abs() <= PATHOLOGY_TOL {
                hits.push((*x, *y));
            }
        }
    }
    hits
}

/// Points of `σ(S)` where `rank [[A − λI, B], [C, 0]] < n + p`.
pub(crate) fn a4_failures(p: &Plant, s_spec: &Spectrum) -> Vec<String> {
    let n = p.n();
    let out = p.outputs();
    let top = Mat::hstack(&[&p.a, &p.b]).expect("plant shapes");
    let bottom = Mat::hstack(&[&p.c, &Mat::zeros(out, p.m())]).expect("plant shapes");
    let mut fails = Vec::new();
    for &lambda in s_spec.values() {
        let mut re = Mat::vstack(&[&top, &bottom]).expect("plant shapes");
        let mut im = Mat::zeros(n + out, n + p.m());
        for i in 0..n {
            re[(i, i)] -= lambda.re;
            im[(i, i)] = -lambda.im;
        }
        let r = rank(&complex_embedding(&re, &im), RANK_TOL) / 2;
        if r != n + out {
            fails.push(format!("rank {r} != n + p = {} at lambda = {lambda:.6}", n + out));
        }
    }
    fails
}

/// Evaluates A1–A4 for the network with sampling period `h`.
///
/// A4 uses the zero-feedthrough form `rank [[A − λI, B], [C, 0]] = n + p`.
pub fn check_assumptions(
    plants: &[Plant],
    exo: &Exosystem,
    g: &LeaderGraph,
    h: f64,
) -> Result<AssumptionReport> {
    check_agents(plants, exo, g.n_followers())?;
    let s_spec = eigenvalues(&exo.s)?;

    let min_re = s_spec.min_real();
    let a1 = AssumptionCheck::new(
        min_re >= -A1_TOL,
        format!("min Re(lambda(S)) = {min_re:.3e}"),
    );

    let a2 = if g.root_reachable() {
        AssumptionCheck::new(true, "every follower reachable from node 0")
    } else {
        AssumptionCheck::new(false, "some follower is not reachable from node 0")
    };

    let mut a3_fail = Vec::new();
    let mut a4_fail = Vec::new();
    for (idx, p) in plants.iter().enumerate() {
        let agent = idx + 1;
        let n = p.n();
        let ctrb_rank = rank(&controllability_matrix(&p.a, &p.b), RANK_TOL);
        if ctrb_rank < n {
            a3_fail.push(format!("agent {agent}: (A, B) uncontrollable, rank {ctrb_rank} < {n}"));
        }
        let mut joint: Vec<Complex64> = eigenvalues(&p.a)?.values().to_vec();
        joint.extend_from_slice(s_spec.values());
        for (x, y) in pathological_pairs(&joint, h) {
            a3_fail.push(format!(
                "agent {agent}: pathological sampling for eigenvalues {x:.6} and {y:.6}"
            ));
        }

        for f in a4_failures(p, &s_spec) {
            a4_fail.push(format!("agent {agent}: {f}"));
        }
    }
    let a3 = if a3_fail.is_empty() {
        AssumptionCheck::new(true, "controllable pairs, non-pathological sampling")
    } else {
        AssumptionCheck::new(false, a3_fail.join("; "))
    };
    let a4 = if a4_fail.is_empty() {
        AssumptionCheck::new(true, "transmission condition holds on sigma(S)")
    } else {
        AssumptionCheck::new(false, a4_fail.join("; "))
    };
    Ok(AssumptionReport { a1, a2, a3, a4 })
}
