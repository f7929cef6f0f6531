//! Exact flow/jump simulation of the sampled-data network.
//!
//! Between samples the stacked state evolves under a constant LTI flow and is
//! propagated with matrix exponentials. At every `t_k = k h` the compensators
//! jump.

use std::io::{self, Write};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{GraphDecomposition, LeaderGraph};
use crate::linalg::mat_exp;
use crate::mat::{fmt_f64, Mat};
use crate::regulator::{
    certify_general_hold, certify_zoh, check_agents, AgentBlocks, CompensatorDesign, Exosystem,
    HoldSpec, Plant,
};

/// States above this max-abs norm abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
    pub w: Vec<f64>,
    pub t: f64,
}

impl NetworkState {
    fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for a in &self.agents {
            v.extend_from_slice(&a.x);
            v.extend_from_slice(&a.xi);
            v.extend_from_slice(&a.eta);
        }
        v.extend_from_slice(&self.w);
        v
    }

    fn unpack_like(&self, v: &[f64], t: f64) -> NetworkState {
        let mut k = 0;
        let mut take = |len: usize| {
            let s = v[k..k + len].to_vec();
            k += len;
            s
        };
        let agents = self
            .agents
            .iter()
            .map(|a| AgentState {
                x: take(a.x.len()),
                xi: take(a.xi.len()),
                eta: take(a.eta.len()),
            })
            .collect();
        let w = take(self.w.len());
        NetworkState { agents, w, t }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.pack().iter().fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }

    /// `‖η − 1 ⊗ w‖₂` over all agents.
    pub fn consensus_error(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| self.agent_consensus_error_sq(a))
            .sum::<f64>()
            .sqrt()
    }

    fn agent_consensus_error_sq(&self, a: &AgentState) -> f64 {
        a.eta.iter().zip(&self.w).map(|(e, w)| (e - w).powi(2)).sum()
    }

    /// `e_i = C_i x_i + Q_i w` for every agent.
    pub fn errors(&self, plants: &[Plant]) -> Vec<Vec<f64>> {
        plants
            .iter()
            .zip(&self.agents)
            .map(|(p, a)| {
                let mut e = p.c.mul_vec(&a.x);
                p.q.mul_vec_acc(&self.w, &mut e);
                e
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Flow,
    PreJump,
    PostJump,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Flow => "flow",
            Phase::PreJump => "pre_jump",
            Phase::PostJump => "post_jump",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub phase: Phase,
    pub state: NetworkState,
    pub errors: Vec<Vec<f64>>,
}

impl Record {
    pub fn t(&self) -> f64 {
        self.state.t
    }

    /// `max_i ‖e_i‖∞`.
    pub fn max_error(&self) -> f64 {
        self.errors
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Time-ordered records of one run. Each sample instant contributes a
/// `PreJump` and a `PostJump` record; flow intervals contribute `substeps − 1`
/// interior `Flow` records.
#[derive(Clone, Debug, Serialize)]
pub struct HybridTrace {
    pub h: f64,
    pub substeps: usize,
    pub records: Vec<Record>,
}

impl HybridTrace {
    /// `(pre, post)` pairs at the sample instants.
    pub fn jumps(&self) -> impl Iterator<Item = (&Record, &Record)> {
        self.records
            .windows(2)
            .filter(|w| w[0].phase == Phase::PreJump && w[1].phase == Phase::PostJump)
            .map(|w| (&w[0], &w[1]))
    }

    pub fn pre_jump_states(&self) -> impl Iterator<Item = &NetworkState> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::PreJump)
            .map(|r| &r.state)
    }

    pub fn horizon(&self) -> f64 {
        self.records.last().map_or(0.0, Record::t)
    }

    pub fn last_state(&self) -> Option<&NetworkState> {
        self.records.last().map(|r| &r.state)
    }

    /// One row per scalar: `t,phase,agent,component,value`. The exosystem
    /// state `w` is written under agent 0.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,phase,agent,component,value")?;
        for r in &self.records {
            let t = fmt_f64(r.t());
            let phase = r.phase.as_str();
            for (j, v) in r.state.w.iter().enumerate() {
                writeln!(out, "{t},{phase},0,w{},{}", j + 1, fmt_f64(*v))?;
            }
            for (i, (a, e)) in r.state.agents.iter().zip(&r.errors).enumerate() {
                let groups: [(&str, &[f64]); 4] =
                    [("x", &a.x), ("xi", &a.xi), ("eta", &a.eta), ("e", e)];
                for (name, vals) in groups {
                    for (j, v) in vals.iter().enumerate() {
                        writeln!(out, "{t},{phase},{},{name}{},{}", i + 1, j + 1, fmt_f64(*v))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stacked flow matrix over `[x_1, ξ_1, η_1, …, x_N, ξ_N, η_N, w]`.
fn flow_matrix(plants: &[Plant], exo: &Exosystem, hold: &HoldSpec) -> Result<Mat> {
    let q = exo.q();
    let mut dims = Vec::with_capacity(plants.len());
    for p in plants {
        let r = hold.dim(p.m());
        let c_h = hold.c_h(p.m());
        if c_h.shape() != (p.m(), r) {
            return Err(Error::dim("flow", format!("C_H {:?} for m = {}", c_h.shape(), p.m())));
        }
        dims.push((p.n(), r));
    }
    let total: usize = dims.iter().map(|(n, r)| n + r + q).sum::<usize>() + q;
    let ow = total - q;
    let mut f = Mat::zeros(total, total);
    let mut o = 0;
    for (p, (n, r)) in plants.iter().zip(&dims) {
        f.set_block(o, o, &p.a);
        f.set_block(o, o + n, &(&p.b * &hold.c_h(p.m())));
        f.set_block(o, ow, &p.p);
        f.set_block(o + n, o + n, &hold.a_h(p.m()));
        f.set_block(o + n + r, o + n + r, &exo.s);
        o += n + r + q;
    }
    f.set_block(ow, ow, &exo.s);
    Ok(f)
}

fn check_state(state: &NetworkState, plants: &[Plant], exo: &Exosystem, hold: &HoldSpec) -> Result<()> {
    let ok = state.agents.len() == plants.len()
        && state.w.len() == exo.q()
        && state.agents.iter().zip(plants).all(|(a, p)| {
            a.x.len() == p.n() && a.xi.len() == hold.dim(p.m()) && a.eta.len() == exo.q()
        });
    if !ok {
        return Err(Error::dim("NetworkState", "state does not match the network"));
    }
    Ok(())
}

/// Propagates the flow for `dt` by one matrix exponential.
pub fn flow(
    state: &NetworkState,
    plants: &[Plant],
    exo: &Exosystem,
    hold: &HoldSpec,
    dt: f64,
) -> Result<NetworkState> {
    check_state(state, plants, exo, hold)?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("flow step dt = {dt}")));
    }
    let phi = mat_exp(&flow_matrix(plants, exo, hold)?, dt)?;
    Ok(state.unpack_like(&phi.mul_vec(&state.pack()), state.t + dt))
}

fn jump_with(state: &NetworkState, design: &CompensatorDesign, d: &GraphDecomposition) -> NetworkState {
    let n = state.agents.len();
    let mu = design.mu;
    let agents = (0..n)
        .map(|i| {
            let a = &state.agents[i];
            let mut xi = design.k1[i].mul_vec(&a.x);
            design.k2[i].mul_vec_acc(&a.eta, &mut xi);
            let mut eta = a.eta.clone();
            for j in 0..n {
                let hij = d.h[(i, j)];
                if hij != 0.0 {
                    for (e, ej) in eta.iter_mut().zip(&state.agents[j].eta) {
                        *e -= mu * hij * ej;
                    }
                }
            }
            let dii = d.delta[(i, i)];
            if dii != 0.0 {
                for (e, w) in eta.iter_mut().zip(&state.w) {
                    *e += mu * dii * w;
                }
            }
            AgentState {
                x: a.x.clone(),
                xi,
                eta,
            }
        })
        .collect();
    NetworkState {
        agents,
        w: state.w.clone(),
        t: state.t,
    }
}

/// Compensator reset at a sample instant:
/// `ξ_i⁺ = K1_i x_i + K2_i η_i`, `η⁺ = (I − μ H ⊗ I) η + μ (Δ ⊗ I)(1 ⊗ w)`.
pub fn jump(state: &NetworkState, design: &CompensatorDesign, g: &LeaderGraph) -> Result<NetworkState> {
    if state.agents.len() != g.n_followers() || design.n_agents() != g.n_followers() {
        return Err(Error::dim("jump", "agent count differs from the graph"));
    }
    for (i, a) in state.agents.iter().enumerate() {
        if design.k1[i].cols() != a.x.len()
            || design.k2[i].cols() != a.eta.len()
            || design.k1[i].rows() != a.xi.len()
            || a.eta.len() != state.w.len()
        {
            return Err(Error::dim("jump", "gain shapes differ from the state").for_agent(i + 1));
        }
    }
    Ok(jump_with(state, design, &g.decompose()))
}

/// Run parameters for [`simulate`].
#[derive(Clone, Debug)]
pub struct SimOptions {
    pub horizon: f64,
    /// Flow subintervals per sampling period recorded as dense output.
    pub substeps: usize,
    /// Simulate even when the certificate fails.
    pub force: bool,
}

/// Initial plant states, compensator estimates and exosystem state. `ξ`
/// starts at zero.
#[derive(Clone, Debug)]
pub struct InitialConditions {
    pub x0: Vec<Vec<f64>>,
    pub eta0: Vec<Vec<f64>>,
    pub w0: Vec<f64>,
}

/// Alternates jumps at `t_k = k h`, `k = 0..=K` with `K = round(T / h)`, and
/// exact flows in between.
pub fn simulate(
    plants: &[Plant],
    exo: &Exosystem,
    design: &CompensatorDesign,
    g: &LeaderGraph,
    init: &InitialConditions,
    opts: &SimOptions,
) -> Result<HybridTrace> {
    check_agents(plants, exo, g.n_followers())?;
    let h = design.h;
    if !(opts.horizon.is_finite() && opts.horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon T = {}", opts.horizon)));
    }
    if opts.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling period h = {h}")));
    }
    if !opts.force {
        let cert = if design.hold.is_zero_order() {
            certify_zoh(design, plants, exo, g)?
        } else {
            let blocks = plants
                .iter()
                .enumerate()
                .map(|(i, p)| AgentBlocks::new(p, &design.hold, &design.k1[i], &design.k2[i]))
                .collect::<Result<Vec<_>>>()?;
            certify_general_hold(&blocks, exo, g, h, design.mu)?.certificate
        };
        if !cert.passed() {
            return Err(Error::CertificateFailed(cert.failures.join("; ")));
        }
    }
    if init.x0.len() != plants.len() || init.eta0.len() != plants.len() {
        return Err(Error::dim("simulate", "initial conditions per agent"));
    }
    let state0 = NetworkState {
        agents: plants
            .iter()
            .enumerate()
            .map(|(i, p)| AgentState {
                x: init.x0[i].clone(),
                xi: vec![0.0; design.hold.dim(p.m())],
                eta: init.eta0[i].clone(),
            })
            .collect(),
        w: init.w0.clone(),
        t: 0.0,
    };
    check_state(&state0, plants, exo, &design.hold)?;
    if design.n_agents() != plants.len() {
        return Err(Error::dim("simulate", "design agent count"));
    }

    let f = flow_matrix(plants, exo, &design.hold)?;
    let sub = opts.substeps;
    let phi_h = mat_exp(&f, h)?;
    let phi_sub: Vec<Mat> = (1..sub)
        .map(|j| mat_exp(&f, h * j as f64 / sub as f64))
        .collect::<Result<_>>()?;
    let d = g.decompose();
    let k_max = (opts.horizon / h).round() as usize;

    let mut trace = HybridTrace {
        h,
        substeps: sub,
        records: Vec::with_capacity((k_max + 1) * (sub + 1)),
    };
    let record = |trace: &mut HybridTrace, phase, state: NetworkState| {
        let errors = state.errors(plants);
        trace.records.push(Record {
            phase,
            state,
            errors,
        });
    };

    let mut pre = state0;
    for k in 0..=k_max {
        let t_k = k as f64 * h;
        pre.t = t_k;
        let post = jump_with(&pre, design, &d);
        record(&mut trace, Phase::PreJump, pre);
        record(&mut trace, Phase::PostJump, post.clone());
        if k == k_max {
            break;
        }
        let z = post.pack();
        for (j, phi) in phi_sub.iter().enumerate() {
            let t = t_k + h * (j + 1) as f64 / sub as f64;
            record(&mut trace, Phase::Flow, post.unpack_like(&phi.mul_vec(&z), t));
        }
        pre = post.unpack_like(&phi_h.mul_vec(&z), (k + 1) as f64 * h);
        let norm = pre.max_abs();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged {
                t: pre.t,
                norm,
                partial: Box::new(trace),
            });
        }
    }
    Ok(trace)
}

/// Settling time, or `never` when the error does not stay below threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Settling {
    At(f64),
    Never,
}

impl Serialize for Settling {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Settling::At(t) => s.serialize_f64(*t),
            Settling::Never => s.serialize_str("never"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AgentMetrics {
    /// `max |e_i|` over the last 20% of the horizon.
    pub tail_max_error: f64,
    pub settling_time: Settling,
    /// Per-jump contraction of `‖η_i − w‖`.
    pub contraction: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorMetrics {
    pub threshold: f64,
    pub agents: Vec<AgentMetrics>,
    /// Per-jump contraction of `‖η − 1 ⊗ w‖`.
    pub contraction: Option<f64>,
    pub final_max_error: f64,
}

/// Values below this are treated as converged to rounding level.
const CONTRACTION_FLOOR: f64 = 1e-12;

/// Geometric rate from a least-squares fit of `log d_k` against `k` over the
/// later half of the points above [`CONTRACTION_FLOOR`].
pub fn contraction_rate(series: &[f64]) -> Option<f64> {
    let kept: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .take_while(|(_, d)| **d > CONTRACTION_FLOOR && d.is_finite())
        .map(|(k, d)| (k as f64, d.ln()))
        .collect();
    let tail = &kept[kept.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mk = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = tail.iter().map(|(k, l)| (k - mk) * (l - ml)).sum();
    let var: f64 = tail.iter().map(|(k, _)| (k - mk).powi(2)).sum();
    Some((cov / var).exp())
}

/// Per-agent settling and contraction summary of a trace.
pub fn error_metrics(trace: &HybridTrace, threshold: f64) -> ErrorMetrics {
    let n = trace.records.first().map_or(0, |r| r.errors.len());
    let horizon = trace.horizon();
    let tail_start = 0.8 * horizon;
    let pre: Vec<&NetworkState> = trace.pre_jump_states().collect();
    let agents = (0..n)
        .map(|i| {
            let err = |r: &Record| r.errors[i].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tail_max_error = trace
                .records
                .iter()
                .filter(|r| r.t() >= tail_start)
                .map(err)
                .fold(0.0, f64::max);
            let last_bad = trace.records.iter().rposition(|r| !(err(r) < threshold));
            let settling_time = match last_bad {
                None => Settling::At(0.0),
                Some(k) if k + 1 == trace.records.len() => Settling::Never,
                Some(k) => Settling::At(trace.records[k + 1].t()),
            };
            let series: Vec<f64> = pre
                .iter()
                .map(|s| s.agent_consensus_error_sq(&s.agents[i]).sqrt())
                .collect();
            AgentMetrics {
                tail_max_error,
                settling_time,
                contraction: contraction_rate(&series),
            }
        })
        .collect();
    let global: Vec<f64> = pre.iter().map(|s| s.consensus_error()).collect();
    ErrorMetrics {
        threshold,
        agents,
        contraction: contraction_rate(&global),
        final_max_error: trace.records.last().map_or(0.0, Record::max_error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;

    fn scalar_network(mu: f64) -> (Vec<Plant>, Exosystem, CompensatorDesign, LeaderGraph) {
        let plant = Plant::new(
            Mat::from_rows(&[[0.0]]),
            Mat::from_rows(&[[1.0]]),
            Mat::from_rows(&[[1.0]]),
            Mat::zeros(1, 1),
            Mat::from_rows(&[[-1.0]]),
        )
        .unwrap();
        let exo = Exosystem::new(Mat::zeros(1, 1), vec![1.0]).unwrap();
        let g = LeaderGraph::new(Mat::from_rows(&[[0.0, 0.0], [1.0, 0.0]]), Topology::Directed).unwrap();
        let design = CompensatorDesign {
            h: 0.1,
            mu,
            k1: vec![Mat::from_rows(&[[-5.0]])],
            k2: vec![Mat::from_rows(&[[5.0]])],
            pi: vec![Mat::from_rows(&[[1.0]])],
            hold: HoldSpec::ZeroOrder,
        };
        (vec![plant], exo, design, g)
    }

    fn state(x: f64, eta: f64, w: f64) -> NetworkState {
        NetworkState {
            agents: vec![AgentState {
                x: vec![x],
                xi: vec![0.0],
                eta: vec![eta],
            }],
            w: vec![w],
            t: 0.0,
        }
    }

    #[test]
    fn single_agent_eta_contracts() {
        let (_, _, design, g) = scalar_network(0.1);
        let post = jump(&state(0.0, 3.0, 1.0), &design, &g).unwrap();
        assert!((post.agents[0].eta[0] - 1.0 - 0.9 * 2.0).abs() < 1e-15);
        assert_eq!(post.agents[0].x, vec![0.0]);
        assert_eq!(post.w, vec![1.0]);
    }

    #[test]
    fn synchronized_eta_is_fixed() {
        let (_, _, design, g) = scalar_network(0.37);
        let post = jump(&state(0.4, 2.5, 2.5), &design, &g).unwrap();
        assert_eq!(post.agents[0].eta, vec![2.5]);
    }

    #[test]
    fn flow_semigroup() {
        let (plants, exo, _, _) = scalar_network(0.1);
        let mut s = state(0.3, 1.0, 2.0);
        s.agents[0].xi = vec![-0.7];
        let hold = HoldSpec::ZeroOrder;
        let once = flow(&s, &plants, &exo, &hold, 0.1).unwrap();
        let twice = flow(&flow(&s, &plants, &exo, &hold, 0.05).unwrap(), &plants, &exo, &hold, 0.05).unwrap();
        assert!((once.agents[0].x[0] - (0.3 - 0.07)).abs() < 1e-14);
        assert!((once.agents[0].x[0] - twice.agents[0].x[0]).abs() < 1e-14);
        assert!((once.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_error_trace_settles_at_zero() {
        let (plants, exo, design, g) = scalar_network(0.1);
        let init = InitialConditions {
            x0: vec![vec![1.0]],
            eta0: vec![vec![1.0]],
            w0: vec![1.0],
        };
        let opts = SimOptions {
            horizon: 1.0,
            substeps: 4,
            force: false,
        };
        let trace = simulate(&plants, &exo, &design, &g, &init, &opts).unwrap();
        let m = error_metrics(&trace, 1e-9);
        assert_eq!(m.agents[0].settling_time, Settling::At(0.0));
        assert_eq!(trace.jumps().count(), 11);
        assert_eq!(trace.records.len(), 11 * 2 + 10 * 3);
    }

    #[test]
    fn forced_unstable_run_diverges() {
        let (plants, exo, mut design, g) = scalar_network(0.1);
        design.k1 = vec![Mat::from_rows(&[[-300.0]])];
        design.k2 = vec![Mat::from_rows(&[[300.0]])];
        let init = InitialConditions {
            x0: vec![vec![2.0]],
            eta0: vec![vec![1.0]],
            w0: vec![1.0],
        };
        let mut opts = SimOptions {
            horizon: 50.0,
            substeps: 1,
            force: false,
        };
        assert!(matches!(
            simulate(&plants, &exo, &design, &g, &init, &opts),
            Err(Error::CertificateFailed(_))
        ));
        opts.force = true;
        match simulate(&plants, &exo, &design, &g, &init, &opts) {
            Err(Error::Diverged { partial, .. }) => {
                assert!(!partial.records.is_empty());
                let m = error_metrics(&partial, 1e-3);
                assert_eq!(m.agents[0].settling_time, Settling::Never);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn contraction_of_geometric_series() {
        let s: Vec<f64> = (0..100).map(|k| 3.0 * 0.8f64.powi(k)).collect();
        assert!((contraction_rate(&s).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(contraction_rate(&[1.0]), None);
    }
}
