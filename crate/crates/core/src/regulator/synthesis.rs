use crate::error::{Error, Result};
use crate::graph::LeaderGraph;
use crate::linalg::{
    eigenvalues, exp_convolution, lu, mat_exp, solve_sylvester, spectral_radius,
    sylvester_residual,
};
use crate::mat::Mat;
use crate::regulator::assumptions::{a4_failures, pbh_rank};
use crate::regulator::{
    certify_zoh, check_agents, check_assumptions, Certificate, CompensatorDesign, Exosystem,
    HoldSpec, Plant, RESIDUAL_TOL,
};

const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITER: usize = 100_000;
const SCHUR_MARGIN: f64 = 1e-6;

/// Sampled plant over one period `h`.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub a_d: Mat,
    pub b_d: Mat,
    pub p_d: Mat,
}

/// Where the per-agent `K1` gains come from.
#[derive(Clone, Debug)]
pub enum GainSource {
    /// Unit-weight discrete LQR on the sampled pair.
    Synthesize,
    Given(Vec<Mat>),
}

/// Solves `Π S = A Π + P` and checks `C Π + Q = 0`.
pub fn solve_regulator_pair(p: &Plant, exo: &Exosystem) -> Result<Mat> {
    if p.q_dim() != exo.q() {
        return Err(Error::dim(
            "solve_regulator_pair",
            format!("plant q = {}, exosystem q = {}", p.q_dim(), exo.q()),
        ));
    }
    let pi = solve_sylvester(&p.a, &exo.s, &p.p)?;
    let sylv = sylvester_residual(&p.a, &exo.s, &p.p, &pi);
    if sylv > RESIDUAL_TOL {
        return Err(Error::NumericalFailure {
            op: "solve_regulator_pair",
            residual: sylv,
        });
    }
    let out = (&(&p.c * &pi) + &p.q).norm_inf();
    if out > RESIDUAL_TOL {
        let a4 = a4_failures(p, &eigenvalues(&exo.s)?);
        let diagnostic = if a4.is_empty() {
            "A4 holds; Q is inconsistent with C and the Sylvester solution".to_string()
        } else {
            format!("A4 fails: {}", a4.join("; "))
        };
        return Err(Error::RegulationInfeasible {
            residual: out,
            diagnostic,
        });
    }
    Ok(pi)
}

/// `A_D = e^{Ah}`, `B_D = ∫₀ʰ e^{As} ds B`, `P_D = ∫₀ʰ e^{A(h−s)} P e^{Ss} ds`.
pub fn discretize(p: &Plant, exo: &Exosystem, h: f64) -> Result<Discretization> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling period h = {h}")));
    }
    let a_d = mat_exp(&p.a, h)?;
    let b_d = exp_convolution(&p.a, &p.b, &Mat::zeros(p.m(), p.m()), h)?;
    let p_d = exp_convolution(&p.a, &p.p, &exo.s, h)?;
    Ok(Discretization { a_d, b_d, p_d })
}

/// Unit-weight discrete LQR gain `K1 = −(I + BᵀPB)⁻¹ BᵀPA`.
///
/// Needs `(A_D, B_D)` stabilizable; modes inside the unit circle may be
/// unreachable.
pub fn synthesize_k1(a_d: &Mat, b_d: &Mat) -> Result<Mat> {
    if !a_d.is_square() || b_d.rows() != a_d.rows() {
        return Err(Error::dim(
            "synthesize_k1",
            format!("A_D {:?}, B_D {:?}", a_d.shape(), b_d.shape()),
        ));
    }
    for &lambda in eigenvalues(a_d)?.values() {
        if lambda.norm() >= 1.0 - SCHUR_MARGIN && pbh_rank(a_d, b_d, lambda) < a_d.rows() {
            return Err(Error::Precondition(format!(
                "(A_D, B_D) not stabilizable: mode {lambda:.6} is unreachable"
            )));
        }
    }
    let n = a_d.rows();
    let m = b_d.cols();
    let at = a_d.transpose();
    let bt = b_d.transpose();
    let q = Mat::identity(n);
    let r = Mat::identity(m);
    let mut p = Mat::identity(n);
    let mut converged = false;
    for _ in 0..RICCATI_MAX_ITER {
        let pa = &p * a_d;
        let btpa = &bt * &pa;
        let gram = &r + &(&bt * &(&p * b_d));
        let gain = lu::solve(&gram, &btpa)?;
        let next = &(&q + &(&at * &pa)) - &(&btpa.transpose() * &gain);
        let next = (&next + &next.transpose()).scale(0.5);
        if !next.is_finite() {
            break;
        }
        let step = (&next - &p).norm_inf();
        p = next;
        if step <= RICCATI_TOL * p.norm_inf().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis(format!(
            "Riccati iteration did not converge in {RICCATI_MAX_ITER} steps"
        )));
    }
    let gram = &r + &(&bt * &(&p * b_d));
    let k1 = -&lu::solve(&gram, &(&bt * &(&p * a_d)))?;
    let rho = spectral_radius(&(a_d + &(b_d * &k1)))?;
    if rho >= 1.0 - SCHUR_MARGIN {
        return Err(Error::Synthesis(format!(
            "closed-loop radius {rho:.9} is not below 1 - {SCHUR_MARGIN:e}"
        )));
    }
    Ok(k1)
}

/// Builds a ZOH design without gating on assumptions or the certificate.
///
/// `mu` defaults to half of [`crate::graph::GraphDecomposition::exact_mu_bound`].
pub fn assemble_zoh_design(
    plants: &[Plant],
    exo: &Exosystem,
    g: &LeaderGraph,
    h: f64,
    mu: Option<f64>,
    gains: &GainSource,
) -> Result<CompensatorDesign> {
    check_agents(plants, exo, g.n_followers())?;
    let mu = match mu {
        Some(mu) if mu.is_finite() && mu > 0.0 => mu,
        Some(mu) => return Err(Error::InvalidArgument(format!("mu = {mu} must be positive"))),
        None => 0.5 * g.decompose().exact_mu_bound()?,
    };
    if let GainSource::Given(k) = gains {
        if k.len() != plants.len() {
            return Err(Error::dim(
                "assemble_zoh_design",
                format!("{} gains for {} agents", k.len(), plants.len()),
            ));
        }
    }
    let mut k1s = Vec::with_capacity(plants.len());
    let mut k2s = Vec::with_capacity(plants.len());
    let mut pis = Vec::with_capacity(plants.len());
    for (i, p) in plants.iter().enumerate() {
        let agent = || i + 1;
        let pi = solve_regulator_pair(p, exo).map_err(|e| e.for_agent(agent()))?;
        let k1 = match gains {
            GainSource::Synthesize => {
                let d = discretize(p, exo, h).map_err(|e| e.for_agent(agent()))?;
                synthesize_k1(&d.a_d, &d.b_d).map_err(|e| e.for_agent(agent()))?
            }
            GainSource::Given(k) => {
                let k1 = k[i].clone();
                if k1.shape() != (p.m(), p.n()) {
                    return Err(Error::dim(
                        "K1",
                        format!("{:?}, expected {:?}", k1.shape(), (p.m(), p.n())),
                    )
                    .for_agent(agent()));
                }
                k1
            }
        };
        let k2 = -&(&k1 * &pi);
        k1s.push(k1);
        k2s.push(k2);
        pis.push(pi);
    }
    Ok(CompensatorDesign {
        h,
        mu,
        k1: k1s,
        k2: k2s,
        pi: pis,
        hold: HoldSpec::ZeroOrder,
    })
}

/// Full ZOH pipeline: assumptions, regulator pair, gains, certificate.
/// A design is returned only together with a passing certificate.
pub fn design_zoh(
    plants: &[Plant],
    exo: &Exosystem,
    g: &LeaderGraph,
    h: f64,
    mu: Option<f64>,
    gains: &GainSource,
) -> Result<(CompensatorDesign, Certificate)> {
    let report = check_assumptions(plants, exo, g, h)?;
    if !report.all_passed() {
        return Err(Error::Assumptions(report.failed_details().join("; ")));
    }
    let design = assemble_zoh_design(plants, exo, g, h, mu, gains)?;
    let cert = certify_zoh(&design, plants, exo, g)?;
    if !cert.passed() {
        return Err(Error::CertificateFailed(cert.failures.join("; ")));
    }
    Ok((design, cert))
}
