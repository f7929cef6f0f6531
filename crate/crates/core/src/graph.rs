//! Leader-follower communication topology.
//!
//! Node 0 is the exosystem; followers are nodes `1..=N`. The adjacency entry
//! `a_ij` is the weight with which follower `i` listens to node `j`.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, sigma_max, Spectrum};
use crate::mat::Mat;

/// How follower-to-follower edges are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Follower weights must be symmetric; reachability ignores direction.
    Undirected,
    /// `a_ij > 0` is an edge `j → i` only.
    Directed,
}

#[derive(Clone, Debug)]
pub struct LeaderGraph {
    adjacency: Mat,
    topology: Topology,
}

/// `L̄`, `Δ` and `H = L̄ + Δ`.
#[derive(Clone, Debug)]
pub struct GraphDecomposition {
    pub l_bar: Mat,
    pub delta: Mat,
    pub h: Mat,
}

impl LeaderGraph {
    /// `adjacency` is `(N+1) × (N+1)` with node 0 first. Row 0 (what the
    /// exosystem would listen to) is ignored.
    pub fn new(adjacency: Mat, topology: Topology) -> Result<Self> {
        if !adjacency.is_square() || adjacency.rows() < 2 {
            return Err(Error::dim(
                "LeaderGraph",
                format!("adjacency {:?} must be (N+1)x(N+1) with N >= 1", adjacency.shape()),
            ));
        }
        let n = adjacency.rows();
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("a_{i}{i} must be zero")));
            }
            for j in 0..n {
                if adjacency[(i, j)] < 0.0 {
                    return Err(Error::InvalidArgument(format!("a_{i}{j} is negative")));
                }
            }
        }
        if topology == Topology::Undirected {
            for i in 1..n {
                for j in i + 1..n {
                    if adjacency[(i, j)] != adjacency[(j, i)] {
                        return Err(Error::InvalidArgument(format!(
                            "undirected graph needs a_{i}{j} == a_{j}{i}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            adjacency,
            topology,
        })
    }

    /// Rebuilds the adjacency from a follower Laplacian and the leader gains
    /// `a_i0`.
    pub fn from_laplacian(l_bar: &Mat, leader_gains: &[f64], topology: Topology) -> Result<Self> {
        let n = l_bar.rows();
        if !l_bar.is_square() || leader_gains.len() != n {
            return Err(Error::dim(
                "LeaderGraph::from_laplacian",
                format!("L {:?} with {} leader gains", l_bar.shape(), leader_gains.len()),
            ));
        }
        for i in 0..n {
            let s: f64 = l_bar.row(i).iter().sum();
            if s.abs() > 1e-12 * (1.0 + l_bar.max_abs()) {
                return Err(Error::InvalidArgument(format!(
                    "Laplacian row {} sums to {s}",
                    i + 1
                )));
            }
        }
        let mut a = Mat::zeros(n + 1, n + 1);
        for i in 0..n {
            a[(i + 1, 0)] = leader_gains[i];
            for j in 0..n {
                if i != j {
                    a[(i + 1, j + 1)] = -l_bar[(i, j)];
                }
            }
        }
        Self::new(a, topology)
    }

    pub fn n_followers(&self) -> usize {
        self.adjacency.rows() - 1
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Weight `a_i0` of the leader link into follower `i` (1-based).
    pub fn leader_gain(&self, i: usize) -> f64 {
        self.adjacency[(i, 0)]
    }

    pub fn decompose(&self) -> GraphDecomposition {
        let n = self.n_followers();
        let mut l_bar = Mat::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if i != j {
                    let w = self.adjacency[(i + 1, j + 1)];
                    l_bar[(i, j)] = -w;
                    degree += w;
                }
            }
            l_bar[(i, i)] = degree;
        }
        let delta = Mat::diag(&(1..=n).map(|i| self.adjacency[(i, 0)]).collect::<Vec<_>>());
        let h = &l_bar + &delta;
        GraphDecomposition { l_bar, delta, h }
    }

    /// Every follower reachable from node 0 along positive-weight edges.
    pub fn root_reachable(&self) -> bool {
        let n = self.adjacency.rows();
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for v in 1..n {
                if seen[v] {
                    continue;
                }
                let forward = self.adjacency[(v, u)] > 0.0;
                let backward = self.topology == Topology::Undirected
                    && u != 0
                    && self.adjacency[(u, v)] > 0.0;
                if forward || backward {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().all(|s| *s)
    }
}

/// Margin for "every eigenvalue of H has positive real part".
pub const ROOT_MARGIN: f64 = 1e-10;

impl GraphDecomposition {
    pub fn h_spectrum(&self) -> Result<Spectrum> {
        eigenvalues(&self.h)
    }

    fn checked_spectrum(&self) -> Result<Spectrum> {
        let spec = self.h_spectrum()?;
        let min_real = spec.min_real();
        if min_real <= ROOT_MARGIN {
            return Err(Error::RootCondition { min_real });
        }
        Ok(spec)
    }

    /// `4 · min Re λ(H) / σ_max(H)²`, the conventional sufficient bound.
    ///
    /// This can exceed the true supremum (see [`Self::exact_mu_bound`]); the
    /// certificates check the consensus radius directly instead of trusting it.
    pub fn paper_mu_bound(&self) -> Result<f64> {
        let spec = self.checked_spectrum()?;
        let s = sigma_max(&self.h)?;
        Ok(4.0 * spec.min_real() / (s * s))
    }

    /// `min_i 2 Re λ_i / |λ_i|²`: the supremum of step sizes with
    /// `max_i |1 − μ λ_i(H)| < 1`.
    pub fn exact_mu_bound(&self) -> Result<f64> {
        let spec = self.checked_spectrum()?;
        Ok(spec
            .values()
            .iter()
            .map(|z| 2.0 * z.re / z.norm_sqr())
            .fold(f64::INFINITY, f64::min))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_graph() -> LeaderGraph {
        let l = Mat::from_rows(&[
            [1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 1.0, 0.0],
            [-1.0, -1.0, -1.0, 3.0],
        ]);
        LeaderGraph::from_laplacian(&l, &[1.0, 1.0, 0.0, 0.0], Topology::Directed).unwrap()
    }

    #[test]
    fn decomposes_example_graph() {
        let d = example_graph().decompose();
        let l = Mat::from_rows(&[
            [1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 1.0, 0.0],
            [-1.0, -1.0, -1.0, 3.0],
        ]);
        assert_eq!(d.l_bar, l);
        assert_eq!(d.delta, Mat::diag(&[1.0, 1.0, 0.0, 0.0]));
        assert_eq!(d.h, &l + &d.delta);
    }

    #[test]
    fn unconnected_followers_with_leader() {
        let a = Mat::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let g = LeaderGraph::new(a, Topology::Undirected).unwrap();
        assert_eq!(g.decompose().h, Mat::identity(2));
        assert!(g.root_reachable());
    }

    #[test]
    fn reachability() {
        assert!(example_graph().root_reachable());
        let empty = LeaderGraph::new(Mat::zeros(4, 4), Topology::Undirected).unwrap();
        assert!(!empty.root_reachable());
        // 0 → 1, and 2 only talks to 1 in the directed sense 2 → 1
        let a = Mat::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
        let g = LeaderGraph::new(a.clone(), Topology::Directed).unwrap();
        assert!(!g.root_reachable());
        let sym = Mat::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
        assert!(LeaderGraph::new(sym, Topology::Undirected).unwrap().root_reachable());
    }

    #[test]
    fn validation() {
        assert!(LeaderGraph::new(Mat::identity(3), Topology::Directed).is_err());
        let neg = Mat::from_rows(&[[0.0, 0.0], [-1.0, 0.0]]);
        assert!(LeaderGraph::new(neg, Topology::Directed).is_err());
        let asym = Mat::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
        assert!(LeaderGraph::new(asym, Topology::Undirected).is_err());
    }

    #[test]
    fn mu_bounds() {
        let unit = GraphDecomposition {
            l_bar: Mat::zeros(3, 3),
            delta: Mat::identity(3),
            h: Mat::identity(3),
        };
        assert!((unit.paper_mu_bound().unwrap() - 4.0).abs() < 1e-14);
        assert!((unit.exact_mu_bound().unwrap() - 2.0).abs() < 1e-14);
        let diag = GraphDecomposition {
            l_bar: Mat::zeros(2, 2),
            delta: Mat::diag(&[1.0, 2.0]),
            h: Mat::diag(&[1.0, 2.0]),
        };
        assert!((diag.paper_mu_bound().unwrap() - 1.0).abs() < 1e-14);
        assert!((diag.exact_mu_bound().unwrap() - 1.0).abs() < 1e-14);
        let d = example_graph().decompose();
        assert!((d.exact_mu_bound().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unrooted_graph_has_no_bound() {
        let g = LeaderGraph::new(Mat::zeros(3, 3), Topology::Undirected).unwrap();
        assert!(matches!(
            g.decompose().exact_mu_bound(),
            Err(Error::RootCondition { .. })
        ));
    }
}
