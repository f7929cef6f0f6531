//! Sampled-data distributed compensators for cooperative output regulation
//! of linear multi-agent systems.
//!
//! The crate designs the compensator gains, certifies closed-loop stability
//! and regulation, simulates the hybrid network exactly, and builds the two
//! reference scenarios (an oscillator-tracking network and a micro-grid
//! dispatch layer).

pub mod config;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod mat;
pub mod regulator;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{GraphDecomposition, LeaderGraph, Topology};
pub use linalg::Spectrum;
pub use mat::Mat;
pub use regulator::{
    Certificate, CompensatorDesign, Exosystem, GainSource, HoldSpec, Plant, Verdict,
};
pub use sim::{HybridTrace, InitialConditions, NetworkState, SimOptions};
