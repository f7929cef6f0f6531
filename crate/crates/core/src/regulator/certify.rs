use crate::error::{Error, Result};
use crate::graph::{GraphDecomposition, LeaderGraph};
use crate::linalg::{
    check_separation, discrete_sylvester_residual, exp_convolution, kron, mat_exp, rank,
    solve_discrete_sylvester, spectral_radius, sylvester_residual,
};
use crate::mat::Mat;
use crate::regulator::{
    check_agents, check_assumptions, discretize, AssumptionFlags, Certificate, CompensatorDesign,
    Exosystem, HoldSpec, Plant, Verdict, RANK_TOL,
};

/// Points per sampling interval at which `Π(t)` is checked.
const GRID_POINTS: usize = 32;

fn mu_bounds(d: &GraphDecomposition, notes: &mut Vec<String>) -> (Option<f64>, Option<f64>) {
    let paper = d.paper_mu_bound();
    let exact = d.exact_mu_bound();
    if let Err(e) = &exact {
        notes.push(format!("mu bounds unavailable: {e}"));
    }
    (paper.ok(), exact.ok())
}

/// `ρ((I − μH) ⊗ e^{Sh})`.
fn consensus_radius(d: &GraphDecomposition, s: &Mat, h: f64, mu: f64) -> Result<f64> {
    Ok(spectral_radius(&consensus_block(d, s, h, mu)?)?)
}

fn consensus_block(d: &GraphDecomposition, s: &Mat, h: f64, mu: f64) -> Result<Mat> {
    let n = d.h.rows();
    let left = &Mat::identity(n) - &d.h.scale(mu);
    Ok(kron(&left, &mat_exp(s, h)?))
}

fn check_design(design: &CompensatorDesign, plants: &[Plant]) -> Result<()> {
    let n = plants.len();
    if design.k1.len() != n || design.k2.len() != n || design.pi.len() != n {
        return Err(Error::dim(
            "design",
            format!(
                "{} K1, {} K2, {} Pi for {n} agents",
                design.k1.len(),
                design.k2.len(),
                design.pi.len()
            ),
        ));
    }
    for (i, p) in plants.iter().enumerate() {
        let r = design.hold.dim(p.m());
        let ok = design.k1[i].shape() == (r, p.n())
            && design.k2[i].shape() == (r, p.q_dim())
            && design.pi[i].shape() == (p.n(), p.q_dim());
        if !ok {
            return Err(Error::dim(
                "design",
                format!(
                    "K1 {:?}, K2 {:?}, Pi {:?}",
                    design.k1[i].shape(),
                    design.k2[i].shape(),
                    design.pi[i].shape()
                ),
            )
            .for_agent(i + 1));
        }
    }
    Ok(())
}

/// Certificate for a zero-order-hold design.
///
/// Errors only on inconsistent dimensions; numerical trouble in a check is
/// recorded as a failure.
pub fn certify_zoh(
    design: &CompensatorDesign,
    plants: &[Plant],
    exo: &Exosystem,
    g: &LeaderGraph,
) -> Result<Certificate> {
    check_agents(plants, exo, g.n_followers())?;
    check_design(design, plants)?;
    if !design.hold.is_zero_order() {
        return Err(Error::InvalidArgument(
            "certify_zoh needs a zero-order hold; use certify_general_hold".into(),
        ));
    }
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    let assumptions = match check_assumptions(plants, exo, g, design.h) {
        Ok(rep) => {
            for d in rep.failed_details() {
                notes.push(d);
            }
            rep.flags()
        }
        Err(e) => {
            failures.push(format!("assumption check: {e}"));
            AssumptionFlags::default()
        }
    };

    let mut rho_agent = Vec::with_capacity(plants.len());
    let mut residuals = Vec::with_capacity(plants.len());
    for (i, p) in plants.iter().enumerate() {
        let k1 = &design.k1[i];
        let k2 = &design.k2[i];
        let pi = &design.pi[i];
        let rho = discretize(p, exo, design.h)
            .and_then(|d| spectral_radius(&(&d.a_d + &(&d.b_d * k1))));
        rho_agent.push(rho.unwrap_or_else(|e| {
            failures.push(format!("agent {}: {e}", i + 1));
            f64::NAN
        }));
        let sylv = sylvester_residual(&p.a, &exo.s, &p.p, pi);
        let out = (&(&p.c * pi) + &p.q).norm_inf();
        let gain = (k2 + &(k1 * pi)).norm_inf();
        residuals.push(sylv.max(out).max(gain));
    }

    let d = g.decompose();
    let rho_eta = consensus_radius(&d, &exo.s, design.h, design.mu).unwrap_or_else(|e| {
        failures.push(format!("consensus radius: {e}"));
        f64::NAN
    });
    let (mu_paper_bound, mu_exact_bound) = mu_bounds(&d, &mut notes);

    let mut cert = Certificate {
        verdict: Verdict::Fail,
        hold: "zero_order",
        rho_agent,
        rho_eta,
        residuals,
        assumptions,
        mu: design.mu,
        mu_paper_bound,
        mu_exact_bound,
        h: design.h,
        separation: None,
        failures,
        notes,
    };
    cert.finalize();
    Ok(cert)
}

/// Per-agent hybrid blocks for a general hold with `r`-dimensional state.
///
/// `F = [[A, B C_H], [0, A_H]]`, `G = [P; 0]`, `M = [[I, 0], [K1, 0]]`,
/// `Γ = [0; K2]`, `Ĉ = [C, 0]`.
#[derive(Clone, Debug)]
pub struct AgentBlocks {
    pub f: Mat,
    pub g: Mat,
    pub m: Mat,
    pub gamma: Mat,
    pub c_hat: Mat,
    pub q: Mat,
    pub a_h: Mat,
}

impl AgentBlocks {
    pub fn new(plant: &Plant, hold: &HoldSpec, k1: &Mat, k2: &Mat) -> Result<Self> {
        let (n, m, q) = (plant.n(), plant.m(), plant.q_dim());
        let c_h = hold.c_h(m);
        let a_h = hold.a_h(m);
        let r = a_h.rows();
        if c_h.shape() != (m, r) || k1.shape() != (r, n) || k2.shape() != (r, q) {
            return Err(Error::dim(
                "AgentBlocks",
                format!(
                    "C_H {:?}, A_H {:?}, K1 {:?}, K2 {:?} for n = {n}, m = {m}, q = {q}",
                    c_h.shape(),
                    a_h.shape(),
                    k1.shape(),
                    k2.shape()
                ),
            ));
        }
        let mut f = Mat::zeros(n + r, n + r);
        f.set_block(0, 0, &plant.a);
        f.set_block(0, n, &(&plant.b * &c_h));
        f.set_block(n, n, &a_h);
        let mut g = Mat::zeros(n + r, q);
        g.set_block(0, 0, &plant.p);
        let mut mm = Mat::zeros(n + r, n + r);
        mm.set_block(0, 0, &Mat::identity(n));
        mm.set_block(n, 0, k1);
        let mut gamma = Mat::zeros(n + r, q);
        gamma.set_block(n, 0, k2);
        let mut c_hat = Mat::zeros(plant.outputs(), n + r);
        c_hat.set_block(0, 0, &plant.c);
        Ok(Self {
            f,
            g,
            m: mm,
            gamma,
            c_hat,
            q: plant.q.clone(),
            a_h,
        })
    }
}

/// General-hold certificate together with the periodic boundary values
/// `Π_i(t_k⁺)` and the spectral gaps between `σ(M e^{Fh})` and `σ(e^{Sh})`.
#[derive(Clone, Debug)]
pub struct GeneralHoldCertificate {
    pub certificate: Certificate,
    pub pi_post: Vec<Mat>,
    pub separation: Vec<f64>,
}

/// Certificate for an arbitrary hold function.
///
/// Only A1 and A2 are evaluated here. The regulator residual per agent is
/// the larger of the boundary-equation residual and
/// `max ‖Ĉ Π(t) + Q‖∞` over a uniform grid of `(0, h]`.
pub fn certify_general_hold(
    blocks: &[AgentBlocks],
    exo: &Exosystem,
    g: &LeaderGraph,
    h: f64,
    mu: f64,
) -> Result<GeneralHoldCertificate> {
    if blocks.len() != g.n_followers() {
        return Err(Error::dim(
            "certify_general_hold",
            format!("{} agents for {} followers", blocks.len(), g.n_followers()),
        ));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling period h = {h}")));
    }
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let e_sh = mat_exp(&exo.s, h)?;

    let s_min_re = crate::linalg::eigenvalues(&exo.s)?.min_real();
    let assumptions = AssumptionFlags {
        a1: Some(s_min_re >= -1e-10),
        a2: Some(g.root_reachable()),
        a3: None,
        a4: None,
    };

    let mut rho_agent = Vec::with_capacity(blocks.len());
    let mut residuals = Vec::with_capacity(blocks.len());
    let mut separation = Vec::with_capacity(blocks.len());
    let mut pi_post = Vec::with_capacity(blocks.len());
    let grid: Vec<(f64, Mat)> = (1..=GRID_POINTS)
        .map(|j| {
            let t = h * j as f64 / GRID_POINTS as f64;
            Ok((t, mat_exp(&exo.s, -t)?))
        })
        .collect::<Result<_>>()?;
    for (i, b) in blocks.iter().enumerate() {
        let agent = i + 1;
        if b.g.cols() != exo.q() {
            return Err(Error::dim("certify_general_hold", "G columns differ from q").for_agent(agent));
        }
        if rank(&b.a_h, RANK_TOL) < b.a_h.rows() {
            notes.push(format!(
                "agent {agent}: A_H is singular; the nonsingular-hold requirement is waived"
            ));
        }
        let e_fh = mat_exp(&b.f, h)?;
        let jump_flow = &b.m * &e_fh;
        rho_agent.push(spectral_radius(&jump_flow)?);
        let gap = check_separation("certify_general_hold", &jump_flow, &e_sh).map_err(|e| {
            Error::Precondition(format!("agent {agent}: spectral separation violated: {e}"))
        })?;
        separation.push(gap);

        let l_h = exp_convolution(&b.f, &b.g, &exo.s, h)?;
        let n_term = &(&b.gamma * &e_sh) + &(&b.m * &l_h);
        let x = solve_discrete_sylvester(&jump_flow, &e_sh, &n_term).map_err(|e| match e {
            Error::SingularEquation { .. } => Error::Precondition(format!("agent {agent}: {e}")),
            other => other.for_agent(agent),
        })?;
        let boundary = discrete_sylvester_residual(&jump_flow, &e_sh, &n_term, &x);

        let mut worst = boundary;
        for (t, e_neg) in &grid {
            let t = *t;
            let l_t = exp_convolution(&b.f, &b.g, &exo.s, t)?;
            let pi_t = &(&(&mat_exp(&b.f, t)? * &x) + &l_t) * e_neg;
            let r = (&(&b.c_hat * &pi_t) + &b.q).norm_inf();
            worst = worst.max(r);
        }
        residuals.push(worst);
        pi_post.push(x);
    }

    let d = g.decompose();
    let rho_eta = consensus_radius(&d, &exo.s, h, mu).unwrap_or_else(|e| {
        failures.push(format!("consensus radius: {e}"));
        f64::NAN
    });
    let (mu_paper_bound, mu_exact_bound) = mu_bounds(&d, &mut notes);
    let mut certificate = Certificate {
        verdict: Verdict::Fail,
        hold: "general",
        rho_agent,
        rho_eta,
        residuals,
        assumptions,
        mu,
        mu_paper_bound,
        mu_exact_bound,
        h,
        separation: Some(separation.clone()),
        failures,
        notes,
    };
    certificate.finalize();
    Ok(GeneralHoldCertificate {
        certificate,
        pi_post,
        separation,
    })
}

/// Blocks of the jump-to-jump matrix: per-agent `[[A_D + B_D K1, 0], [K1, 0]]`
/// and the consensus block `(I − μH) ⊗ e^{Sh}`.
#[derive(Clone, Debug)]
pub struct JumpBlocks {
    pub agent: Vec<Mat>,
    pub consensus: Mat,
}

pub fn jump_to_jump_blocks(
    design: &CompensatorDesign,
    plants: &[Plant],
    exo: &Exosystem,
    g: &LeaderGraph,
) -> Result<JumpBlocks> {
    check_agents(plants, exo, g.n_followers())?;
    check_design(design, plants)?;
    let mut agent = Vec::with_capacity(plants.len());
    for (i, p) in plants.iter().enumerate() {
        let d = discretize(p, exo, design.h)?;
        let k1 = &design.k1[i];
        let (n, m) = (p.n(), p.m());
        let mut blk = Mat::zeros(n + m, n + m);
        blk.set_block(0, 0, &(&d.a_d + &(&d.b_d * k1)));
        blk.set_block(n, 0, k1);
        agent.push(blk);
    }
    let consensus = consensus_block(&g.decompose(), &exo.s, design.h, design.mu)?;
    Ok(JumpBlocks { agent, consensus })
}

/// Homogeneous map from pre-jump `(x, ξ, η)` at `t_k` to the same at
/// `t_{k+1}` for a ZOH design, with the stacked ordering
/// `[x_1..x_N, ξ_1..ξ_N, η_1..η_N]`.
pub fn jump_to_jump_matrix(
    design: &CompensatorDesign,
    plants: &[Plant],
    exo: &Exosystem,
    g: &LeaderGraph,
) -> Result<Mat> {
    check_agents(plants, exo, g.n_followers())?;
    check_design(design, plants)?;
    if !design.hold.is_zero_order() {
        return Err(Error::InvalidArgument(
            "jump_to_jump_matrix is defined for a zero-order hold".into(),
        ));
    }
    let q = exo.q();
    let nx: usize = plants.iter().map(|p| p.n()).sum();
    let nu: usize = plants.iter().map(|p| p.m()).sum();
    let ne = q * plants.len();
    let total = nx + nu + ne;
    let mut out = Mat::zeros(total, total);
    let (mut ox, mut ou) = (0, nx);
    for (i, p) in plants.iter().enumerate() {
        let d = discretize(p, exo, design.h)?;
        let k1 = &design.k1[i];
        let k2 = &design.k2[i];
        let oe = nx + nu + i * q;
        out.set_block(ox, ox, &(&d.a_d + &(&d.b_d * k1)));
        out.set_block(ox, oe, &(&d.b_d * k2));
        out.set_block(ou, ox, k1);
        out.set_block(ou, oe, k2);
        ox += p.n();
        ou += p.m();
    }
    let consensus = consensus_block(&g.decompose(), &exo.s, design.h, design.mu)?;
    out.set_block(nx + nu, nx + nu, &consensus);
    Ok(out)
}
