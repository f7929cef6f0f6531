//! Builders for the oscillator-tracking network and the micro-grid dispatch
//! experiment.

mod example41;
mod microgrid;

pub use example41::{example_4_1, DEFAULT_SEED, PAPER_K1, PAPER_PI};
pub use microgrid::{
    dispatch_radius, dispatch_update_matrix, equal_ic_optimum, ic_consensus_step,
    microgrid_flow, run_microgrid, DispatchState, MgState, MicrogridParams, MicrogridSample,
    MicrogridTrace, MuRule,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::LeaderGraph;
use crate::mat::Mat;
use crate::regulator::{
    assemble_zoh_design, certify_general_hold, certify_zoh, solve_regulator_pair, AgentBlocks,
    Certificate, CompensatorDesign, Exosystem, GainSource, HoldSpec, Plant,
};
use crate::sim::InitialConditions;

/// Horizon, dense-output resolution and seed for a simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSettings {
    pub seed: u64,
    pub horizon: f64,
    pub substeps: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            horizon: 30.0,
            substeps: 10,
        }
    }
}

/// A complete leader-follower regulation problem with its default design
/// parameters.
#[derive(Clone, Debug)]
pub struct NetworkScenario {
    pub plants: Vec<Plant>,
    pub exo: Exosystem,
    pub graph: LeaderGraph,
    pub h: f64,
    /// `None` selects the default step size rule.
    pub mu: Option<f64>,
    pub hold: HoldSpec,
    /// Gains shipped with the scenario, if any.
    pub k1: Option<Vec<Mat>>,
    /// Only used with a general hold, where `K2` is not tied to `Π`.
    pub k2: Option<Vec<Mat>>,
    pub sim: SimSettings,
}

impl NetworkScenario {
    /// Given gains when the scenario carries them, LQR synthesis otherwise.
    pub fn default_gains(&self) -> GainSource {
        match &self.k1 {
            Some(k) => GainSource::Given(k.clone()),
            None => GainSource::Synthesize,
        }
    }

    /// Builds the design without gating on the certificate.
    ///
    /// A general hold needs both gains supplied by the scenario.
    pub fn assemble(&self, gains: &GainSource) -> Result<CompensatorDesign> {
        if self.hold.is_zero_order() {
            return assemble_zoh_design(&self.plants, &self.exo, &self.graph, self.h, self.mu, gains);
        }
        let (GainSource::Given(k1), Some(k2)) = (gains, &self.k2) else {
            return Err(Error::InvalidArgument(
                "a general hold needs explicit K1 and K2 gains".into(),
            ));
        };
        if k1.len() != self.plants.len() || k2.len() != self.plants.len() {
            return Err(Error::dim("design", "one K1 and one K2 per agent"));
        }
        let mu = match self.mu {
            Some(mu) => mu,
            None => 0.5 * self.graph.decompose().exact_mu_bound()?,
        };
        let pi = self
            .plants
            .iter()
            .enumerate()
            .map(|(i, p)| solve_regulator_pair(p, &self.exo).map_err(|e| e.for_agent(i + 1)))
            .collect::<Result<_>>()?;
        Ok(CompensatorDesign {
            h: self.h,
            mu,
            k1: k1.clone(),
            k2: k2.clone(),
            pi,
            hold: self.hold.clone(),
        })
    }

    /// ZOH or general-hold certificate, whichever matches the design.
    pub fn certify(&self, design: &CompensatorDesign) -> Result<Certificate> {
        if design.hold.is_zero_order() {
            return certify_zoh(design, &self.plants, &self.exo, &self.graph);
        }
        let blocks = self
            .plants
            .iter()
            .enumerate()
            .map(|(i, p)| {
                AgentBlocks::new(p, &design.hold, &design.k1[i], &design.k2[i])
                    .map_err(|e| e.for_agent(i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(certify_general_hold(&blocks, &self.exo, &self.graph, design.h, design.mu)?.certificate)
    }

    /// Plant states and compensator estimates uniform in `[-1, 1]`; `w(0)`
    /// from the exosystem.
    pub fn initial_conditions(&self, seed: u64) -> InitialConditions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = self.exo.q();
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect() };
        let x0 = self.plants.iter().map(|p| draw(p.n())).collect();
        let eta0 = self.plants.iter().map(|_| draw(q)).collect();
        InitialConditions {
            x0,
            eta0,
            w0: self.exo.w0.clone(),
        }
    }
}
