//! Four third-order followers tracking a harmonic oscillator.

use crate::graph::{LeaderGraph, Topology};
use crate::linalg::solve_sylvester;
use crate::mat::Mat;
use crate::regulator::{Exosystem, HoldSpec, Plant};
use crate::scenarios::{NetworkScenario, SimSettings};

pub const DEFAULT_SEED: u64 = 20_240_401;

/// Reference state-feedback gain, shared by all followers.
pub const PAPER_K1: [f64; 3] = [-8.9637, -10.3322, -10.7802];

/// Reference regulator solution `Π_i`.
pub const PAPER_PI: [[f64; 2]; 3] = [[-0.0901, -0.0976], [-0.1951, 0.1801], [0.3603, 0.3903]];

/// The oscillator example with `h = 0.1`, `μ = 0.1` and the reference gain.
///
/// `Q = −C Π` with `Π` the Sylvester solution, so the output equation holds
/// by construction.
pub fn example_4_1() -> NetworkScenario {
    let a = Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 2.0, 3.0]]);
    let b = Mat::col(&[0.0, 0.0, 1.0]);
    let c = Mat::from_rows(&[[1.0, 1.0, 1.0]]);
    let p = Mat::from_rows(&[[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]]);
    let s = Mat::from_rows(&[[0.0, -2.0], [2.0, 0.0]]);
    let pi = solve_sylvester(&a, &s, &p).expect("oscillator is separated from the plant");
    let q = -&(&c * &pi);
    let plant = Plant::new(a, b, c, p, q).expect("consistent shapes");

    let l_bar = Mat::from_rows(&[
        [1.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 1.0, 0.0],
        [-1.0, -1.0, -1.0, 3.0],
    ]);
    // the follower Laplacian is not symmetric, so edges are read as directed
    let graph = LeaderGraph::from_laplacian(&l_bar, &[1.0, 1.0, 0.0, 0.0], Topology::Directed)
        .expect("valid Laplacian");

    NetworkScenario {
        plants: vec![plant; 4],
        exo: Exosystem::new(s, vec![1.0, 0.0]).expect("2x2 exosystem"),
        graph,
        h: 0.1,
        mu: Some(0.1),
        hold: HoldSpec::ZeroOrder,
        k1: Some(vec![Mat::from_rows(&[PAPER_K1]); 4]),
        k2: None,
        sim: SimSettings::default(),
    }
}
