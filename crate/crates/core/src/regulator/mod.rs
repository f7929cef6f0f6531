//! Problem data, assumption checks, gain synthesis and Schur certificates for
//! sampled-data distributed compensators.

mod assumptions;
mod certify;
mod synthesis;

pub use assumptions::{check_assumptions, AssumptionCheck, AssumptionReport, RANK_TOL};
pub use certify::{
    certify_general_hold, certify_zoh, jump_to_jump_blocks, jump_to_jump_matrix, AgentBlocks,
    GeneralHoldCertificate, JumpBlocks,
};
pub use synthesis::{
    assemble_zoh_design, design_zoh, discretize, solve_regulator_pair, synthesize_k1,
    Discretization, GainSource,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Tolerance on regulator residuals for a passing certificate.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// One agent: `ẋ = A x + B u + P w`, `e = C x + Q w`.
#[derive(Clone, Debug)]
pub struct Plant {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub p: Mat,
    pub q: Mat,
}

impl Plant {
    pub fn new(a: Mat, b: Mat, c: Mat, p: Mat, q: Mat) -> Result<Self> {
        let n = a.rows();
        let ok = a.is_square()
            && b.rows() == n
            && c.cols() == n
            && p.rows() == n
            && q.rows() == c.rows()
            && q.cols() == p.cols();
        if !ok {
            return Err(Error::dim(
                "Plant",
                format!(
                    "A {:?}, B {:?}, C {:?}, P {:?}, Q {:?}",
                    a.shape(),
                    b.shape(),
                    c.shape(),
                    p.shape(),
                    q.shape()
                ),
            ));
        }
        Ok(Self { a, b, c, p, q })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    /// Output (error) dimension.
    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn q_dim(&self) -> usize {
        self.p.cols()
    }
}

/// `ẇ = S w` with initial condition `w0`.
#[derive(Clone, Debug)]
pub struct Exosystem {
    pub s: Mat,
    pub w0: Vec<f64>,
}

impl Exosystem {
    pub fn new(s: Mat, w0: Vec<f64>) -> Result<Self> {
        if !s.is_square() || w0.len() != s.rows() {
            return Err(Error::dim(
                "Exosystem",
                format!("S {:?} with w0 of length {}", s.shape(), w0.len()),
            ));
        }
        Ok(Self { s, w0 })
    }

    pub fn q(&self) -> usize {
        self.s.rows()
    }
}

/// Inter-sample control shape `u(t) = C_H exp(A_H (t − t_k)) ξ(t_k⁺)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HoldSpec {
    /// `C_H = I_m`, `A_H = 0`.
    ZeroOrder,
    General { c_h: Mat, a_h: Mat },
}

impl HoldSpec {
    pub fn general(c_h: Mat, a_h: Mat) -> Result<Self> {
        if !a_h.is_square() || c_h.cols() != a_h.rows() {
            return Err(Error::dim(
                "HoldSpec",
                format!("C_H {:?}, A_H {:?}", c_h.shape(), a_h.shape()),
            ));
        }
        Ok(HoldSpec::General { c_h, a_h })
    }

    /// `C_H` for an agent with `m` inputs.
    pub fn c_h(&self, m: usize) -> Mat {
        match self {
            HoldSpec::ZeroOrder => Mat::identity(m),
            HoldSpec::General { c_h, .. } => c_h.clone(),
        }
    }

    pub fn a_h(&self, m: usize) -> Mat {
        match self {
            HoldSpec::ZeroOrder => Mat::zeros(m, m),
            HoldSpec::General { a_h, .. } => a_h.clone(),
        }
    }

    /// Dimension `r` of the hold state.
    pub fn dim(&self, m: usize) -> usize {
        match self {
            HoldSpec::ZeroOrder => m,
            HoldSpec::General { a_h, .. } => a_h.rows(),
        }
    }

    pub fn is_zero_order(&self) -> bool {
        matches!(self, HoldSpec::ZeroOrder)
    }
}

/// Gains and parameters of the distributed compensator.
#[derive(Clone, Debug, Serialize)]
pub struct CompensatorDesign {
    pub h: f64,
    pub mu: f64,
    pub k1: Vec<Mat>,
    pub k2: Vec<Mat>,
    pub pi: Vec<Mat>,
    pub hold: HoldSpec,
}

impl CompensatorDesign {
    pub fn n_agents(&self) -> usize {
        self.k1.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// A1–A4 outcomes; `None` where a certificate does not evaluate a check.
#[derive(Clone, Debug, Default, Serialize)]
pub struct AssumptionFlags {
    #[serde(rename = "A1")]
    pub a1: Option<bool>,
    #[serde(rename = "A2")]
    pub a2: Option<bool>,
    #[serde(rename = "A3")]
    pub a3: Option<bool>,
    #[serde(rename = "A4")]
    pub a4: Option<bool>,
}

impl AssumptionFlags {
    fn all_evaluated_pass(&self) -> bool {
        [self.a1, self.a2, self.a3, self.a4]
            .iter()
            .all(|f| f.unwrap_or(true))
    }
}

/// Stability and regulation certificate for a design.
///
/// `verdict` is `pass` exactly when every evaluated assumption holds, every
/// per-agent radius is below one, the consensus radius is below one and all
/// residuals are within [`RESIDUAL_TOL`].
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub hold: &'static str,
    pub rho_agent: Vec<f64>,
    pub rho_eta: f64,
    pub residuals: Vec<f64>,
    pub assumptions: AssumptionFlags,
    pub mu: f64,
    pub mu_paper_bound: Option<f64>,
    pub mu_exact_bound: Option<f64>,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<Vec<f64>>,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    /// Recomputes `failures` and `verdict` from the recorded numbers.
    fn finalize(&mut self) {
        let mut failures = std::mem::take(&mut self.failures);
        let flags = [
            ("A1", self.assumptions.a1),
            ("A2", self.assumptions.a2),
            ("A3", self.assumptions.a3),
            ("A4", self.assumptions.a4),
        ];
        for (name, flag) in flags {
            if flag == Some(false) {
                failures.push(format!("assumption {name} fails"));
            }
        }
        for (i, rho) in self.rho_agent.iter().enumerate() {
            if !(*rho < 1.0) {
                failures.push(format!("agent {}: closed-loop radius {rho:.6} >= 1", i + 1));
            }
        }
        if !(self.rho_eta < 1.0) {
            failures.push(format!("consensus radius {:.6} >= 1", self.rho_eta));
        }
        for (i, r) in self.residuals.iter().enumerate() {
            if !(*r <= RESIDUAL_TOL) {
                failures.push(format!("agent {}: regulator residual {r:.3e}", i + 1));
            }
        }
        let ok = self.assumptions.all_evaluated_pass()
            && self.rho_agent.iter().all(|r| *r < 1.0)
            && self.rho_eta < 1.0
            && self.residuals.iter().all(|r| *r <= RESIDUAL_TOL);
        self.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        self.failures = failures;
    }

    /// Largest per-agent radius together with the consensus radius.
    pub fn max_rho(&self) -> f64 {
        self.rho_agent.iter().copied().fold(self.rho_eta, f64::max)
    }
}

pub(crate) fn check_agents(plants: &[Plant], exo: &Exosystem, n_followers: usize) -> Result<()> {
    if plants.len() != n_followers {
        return Err(Error::dim(
            "agents",
            format!("{} plants for {} followers", plants.len(), n_followers),
        ));
    }
    for (i, p) in plants.iter().enumerate() {
        if p.q_dim() != exo.q() {
            return Err(Error::dim(
                "agents",
                format!("plant {} has q = {}, exosystem q = {}", i + 1, p.q_dim(), exo.q()),
            ));
        }
    }
    Ok(())
}
