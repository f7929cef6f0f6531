//! Five inverter-based micro-grids under incremental-cost consensus dispatch.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{exp_convolution, mat_exp, spectral_radius};
use crate::mat::Mat;

/// How the per-MG consensus step sizes are derived from `L_c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    /// `μ_i = 1 / Σ_j |l_ij|`.
    RowNormalized,
    /// `μ_i = Σ_j |l_ij|` taken literally. Unstable for the shipped `L_c`.
    Literal,
}

#[derive(Clone, Debug, Serialize)]
pub struct MicrogridParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub p_r0: Vec<f64>,
    pub a0: Vec<f64>,
    pub laplacian: Mat,
    pub mu: Vec<f64>,
    pub tau_p: f64,
    pub tau_v: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub k1: f64,
    pub k2: f64,
    pub omega_d: f64,
    pub v_d: f64,
    /// `(t, P_main)` pairs; each value holds from its time on.
    pub demand: Vec<(f64, f64)>,
    /// Interval between dispatch updates, seconds.
    pub dispatch_h: f64,
}

impl MicrogridParams {
    /// Table 1 costs, the five-node `L_c`, demand 650 stepping to 850 at
    /// 2.3 s and the default physical constants.
    pub fn table1() -> Self {
        let laplacian = Mat::from_rows(&[
            [4.0, -1.0, -1.0, -1.0, -1.0],
            [-1.0, 1.0, 0.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 0.0, 1.0],
        ]);
        let mu = mu_from_rule(&laplacian, MuRule::RowNormalized);
        Self {
            alpha: vec![561.0, 310.0, 78.0, 561.0, 78.0],
            beta: vec![7.92, 7.85, 7.8, 7.92, 7.8],
            p_r0: vec![200.0, 150.0, 100.0, 100.0, 100.0],
            a0: vec![0.0005, 0.0, 0.0, 0.0, 0.0],
            laplacian,
            mu,
            tau_p: 0.1,
            tau_v: 0.1,
            k_p: 0.05,
            k_q: 0.05,
            k1: 5.0,
            k2: 5.0,
            omega_d: 50.0,
            v_d: 1.0,
            demand: vec![(0.0, 650.0), (2.3, 850.0)],
            dispatch_h: 5e-7,
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn set_mu_rule(&mut self, rule: MuRule) {
        self.mu = mu_from_rule(&self.laplacian, rule);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let lens = [self.beta.len(), self.p_r0.len(), self.a0.len(), self.mu.len()];
        if n == 0 || lens.iter().any(|l| *l != n) || self.laplacian.shape() != (n, n) {
            return Err(Error::dim(
                "MicrogridParams",
                format!("{n} MGs, lengths {lens:?}, L_c {:?}", self.laplacian.shape()),
            ));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidArgument("alpha_i must be positive".into()));
        }
        let positive = [self.tau_p, self.tau_v, self.k1, self.k2, self.dispatch_h];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(
                "tau_p, tau_V, k1, k2 and dispatch_h must be positive".into(),
            ));
        }
        for i in 0..n {
            let s: f64 = self.laplacian.row(i).iter().sum();
            if s.abs() > 1e-12 * (1.0 + self.laplacian.max_abs()) {
                return Err(Error::InvalidArgument(format!("L_c row {} sums to {s}", i + 1)));
            }
        }
        if self.demand.is_empty() {
            return Err(Error::InvalidArgument("empty demand schedule".into()));
        }
        Ok(())
    }

    /// Demand in force at time `t`.
    pub fn p_main(&self, t: f64) -> f64 {
        self.demand
            .iter()
            .filter(|(s, _)| *s <= t)
            .last()
            .unwrap_or(&self.demand[0])
            .1
    }

    /// `[δ, Δω, ΔV, P, Q]` flow matrix and the input column for `P^r`.
    pub fn flow_system(&self) -> (Mat, Mat) {
        let tp = self.tau_p;
        let tv = self.tau_v;
        let a = Mat::from_rows(&[
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0 / tp, 0.0, -self.k_p / tp, 0.0],
            [0.0, 0.0, -1.0 / tv, 0.0, -self.k_q / tv],
            [0.0, 0.0, 0.0, -self.k1, 0.0],
            [0.0, 0.0, 0.0, 0.0, -self.k2],
        ]);
        let b = Mat::col(&[
            0.0,
            FRAC_1_SQRT_2 * self.k_p / tp,
            FRAC_1_SQRT_2 * self.k_q / tv,
            FRAC_1_SQRT_2 * self.k1,
            FRAC_1_SQRT_2 * self.k2,
        ]);
        (a, b)
    }
}

fn mu_from_rule(l: &Mat, rule: MuRule) -> Vec<f64> {
    (0..l.rows())
        .map(|i| {
            let s: f64 = l.row(i).iter().map(|v| v.abs()).sum();
            match rule {
                MuRule::RowNormalized => 1.0 / s,
                MuRule::Literal => s,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispatchState {
    pub lambda: Vec<f64>,
    pub p_r: Vec<f64>,
}

impl DispatchState {
    /// `Λ_i = α_i P_i^r(0) + β_i`.
    pub fn initial(params: &MicrogridParams) -> Self {
        let lambda = (0..params.n())
            .map(|i| params.alpha[i] * params.p_r0[i] + params.beta[i])
            .collect();
        Self {
            lambda,
            p_r: params.p_r0.clone(),
        }
    }

    pub fn spread(&self) -> f64 {
        let max = self.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.lambda.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// One incremental-cost consensus update followed by the power re-dispatch
/// `P_i^r = (Λ_i − β_i) / α_i`.
pub fn ic_consensus_step(s: &DispatchState, params: &MicrogridParams, p_main: f64) -> DispatchState {
    let mut next = s.clone();
    DispatchKernel::new(params).step(&mut next, p_main);
    next
}

/// Neighbour lists and gains of the dispatch update, updated in place.
struct DispatchKernel {
    neighbours: Vec<Vec<(usize, f64)>>,
    mu: Vec<f64>,
    a0: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    scratch: Vec<f64>,
}

impl DispatchKernel {
    fn new(params: &MicrogridParams) -> Self {
        let n = params.n();
        let neighbours = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && params.laplacian[(i, j)] != 0.0)
                    .map(|j| (j, -params.laplacian[(i, j)]))
                    .collect()
            })
            .collect();
        Self {
            neighbours,
            mu: params.mu.clone(),
            a0: params.a0.clone(),
            alpha: params.alpha.clone(),
            beta: params.beta.clone(),
            scratch: vec![0.0; n],
        }
    }

    fn step(&mut self, s: &mut DispatchState, p_main: f64) {
        let mismatch: f64 = s.p_r.iter().sum::<f64>() - p_main;
        for (i, out) in self.scratch.iter_mut().enumerate() {
            let li = s.lambda[i];
            let consensus: f64 = self.neighbours[i]
                .iter()
                .map(|&(j, a)| a * (li - s.lambda[j]))
                .sum();
            *out = li - (self.mu[i] * consensus + self.a0[i] * mismatch);
        }
        s.lambda.copy_from_slice(&self.scratch);
        for i in 0..s.p_r.len() {
            s.p_r[i] = (s.lambda[i] - self.beta[i]) / self.alpha[i];
        }
    }
}

/// Linear part of the dispatch update on `Λ`:
/// `I − diag(μ) L_c − a_0 (1/α)ᵀ`.
pub fn dispatch_update_matrix(params: &MicrogridParams) -> Mat {
    let n = params.n();
    Mat::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - params.mu[i] * params.laplacian[(i, j)] - params.a0[i] / params.alpha[j]
    })
}

pub fn dispatch_radius(params: &MicrogridParams) -> Result<f64> {
    spectral_radius(&dispatch_update_matrix(params))
}

/// Equal-incremental-cost optimum `(P_main + Σ β_i/α_i) / Σ 1/α_i`.
pub fn equal_ic_optimum(params: &MicrogridParams, p_main: f64) -> f64 {
    let num: f64 = p_main + (0..params.n()).map(|i| params.beta[i] / params.alpha[i]).sum::<f64>();
    let den: f64 = params.alpha.iter().map(|a| 1.0 / a).sum();
    num / den
}

/// Physical state `[δ, Δω, ΔV, P, Q]` of one MG.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MgState(pub [f64; 5]);

impl MgState {
    /// Rest point for a held dispatch `P^r`.
    pub fn equilibrium(p_r: f64) -> Self {
        let set = FRAC_1_SQRT_2 * p_r;
        MgState([0.0, 0.0, 0.0, set, set])
    }

    pub fn delta_omega(&self) -> f64 {
        self.0[1]
    }

    pub fn p(&self) -> f64 {
        self.0[3]
    }

    pub fn q(&self) -> f64 {
        self.0[4]
    }
}

/// Exact propagator for one flow interval of length `dt`.
struct MgPropagator {
    phi: [[f64; 5]; 5],
    gamma: [f64; 5],
}

impl MgPropagator {
    fn new(params: &MicrogridParams, dt: f64) -> Result<Self> {
        let (a, b) = params.flow_system();
        let phi = mat_exp(&a, dt)?;
        let gamma = exp_convolution(&a, &b, &Mat::zeros(1, 1), dt)?;
        Ok(Self {
            phi: std::array::from_fn(|i| std::array::from_fn(|j| phi[(i, j)])),
            gamma: std::array::from_fn(|i| gamma[(i, 0)]),
        })
    }

    fn step(&self, s: &MgState, p_r: f64) -> MgState {
        MgState(std::array::from_fn(|i| {
            let row = &self.phi[i];
            row[0] * s.0[0] + row[1] * s.0[1] + row[2] * s.0[2] + row[3] * s.0[3] + row[4] * s.0[4]
                + self.gamma[i] * p_r
        }))
    }
}

/// Propagates every MG by `dt` with the dispatch `p_r_held` frozen.
pub fn microgrid_flow(
    states: &[MgState],
    params: &MicrogridParams,
    p_r_held: &[f64],
    dt: f64,
) -> Result<Vec<MgState>> {
    if states.len() != params.n() || p_r_held.len() != params.n() {
        return Err(Error::dim("microgrid_flow", "one state and one setpoint per MG"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("flow step dt = {dt}")));
    }
    let prop = MgPropagator::new(params, dt)?;
    Ok(states.iter().zip(p_r_held).map(|(s, p)| prop.step(s, *p)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct MicrogridSample {
    pub t: f64,
    pub p_main: f64,
    pub lambda: Vec<f64>,
    pub p_r: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `ω_i = ω_d + Δω_i`.
    pub omega: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MicrogridTrace {
    /// Decimated samples taken after each recorded flow interval.
    pub samples: Vec<MicrogridSample>,
    pub dispatch: DispatchState,
    pub mg: Vec<MgState>,
    pub steps: usize,
    pub horizon: f64,
}

/// Recorded rows per run, roughly.
const TARGET_SAMPLES: usize = 2000;

/// Alternates dispatch updates every `dispatch_h` with exact MG flows.
/// The MGs start at rest for `P^r(0)`.
pub fn run_microgrid(params: &MicrogridParams, horizon: f64) -> Result<MicrogridTrace> {
    params.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon T = {horizon}")));
    }
    let h = params.dispatch_h;
    let steps = (horizon / h).round().max(1.0) as usize;
    let stride = steps.div_ceil(TARGET_SAMPLES).max(1);
    let prop = MgPropagator::new(params, h)?;
    let mut dispatch = DispatchState::initial(params);
    let mut kernel = DispatchKernel::new(params);
    let mut mg: Vec<MgState> = params.p_r0.iter().map(|p| MgState::equilibrium(*p)).collect();
    let mut samples = Vec::with_capacity(steps / stride + 2);
    let sample = |t: f64, p_main: f64, d: &DispatchState, mg: &[MgState]| MicrogridSample {
        t,
        p_main,
        lambda: d.lambda.clone(),
        p_r: d.p_r.clone(),
        p: mg.iter().map(MgState::p).collect(),
        q: mg.iter().map(MgState::q).collect(),
        omega: mg.iter().map(|s| params.omega_d + s.delta_omega()).collect(),
    };
    samples.push(sample(0.0, params.p_main(0.0), &dispatch, &mg));
    for k in 0..steps {
        let t_k = k as f64 * h;
        let p_main = params.p_main(t_k);
        kernel.step(&mut dispatch, p_main);
        for (s, p) in mg.iter_mut().zip(&dispatch.p_r) {
            *s = prop.step(s, *p);
        }
        let norm = dispatch
            .lambda
            .iter()
            .chain(mg.iter().flat_map(|s| s.0.iter()))
            .fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        let t = (k + 1) as f64 * h;
        if norm > crate::sim::DIVERGENCE_NORM {
            return Err(Error::DispatchDiverged { t, norm });
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            samples.push(sample(t, p_main, &dispatch, &mg));
        }
    }
    Ok(MicrogridTrace {
        samples,
        dispatch,
        mg,
        steps,
        horizon: steps as f64 * h,
    })
}
