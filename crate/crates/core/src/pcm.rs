//! Pairwise consistency maximization over communication measurements.
//!
//! Every AOA mode becomes a [`MeasurementHypothesis`]. Two hypotheses from
//! different measurements are consistent when the loop they close with the
//! two odometry chains, `T^{c1}_{c2} · T^{c2}_{c2'} · (T^{c1'}_{c2'})⁻¹ · T^{c1'}_{c1}`,
//! is close to identity in Mahalanobis distance. The realization is the
//! maximum clique of the resulting graph.

use nalgebra::Vector6;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::factors::{LinkPrior, Realization};
use crate::lie::{compound, invert, log_map};
use crate::pose_graph::{hypotheses, MeasurementHypothesis, Trajectory};
use crate::{CommMeasurement, Covariance6};

/// Directions whose information is below this fraction of the largest are
/// treated as unobserved and projected out of `d_PCM`.
pub const OBSERVABLE_RATIO: f64 = 1e-6;

/// Threshold applied to `d_PCM`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// `√χ²_p(rank)` with `rank` the dimension of the observable subspace.
    Chi2 { confidence: f64 },
    Fixed(f64),
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::Chi2 { confidence: 0.95 }
    }
}

impl Gamma {
    pub fn threshold(&self, rank: usize) -> f64 {
        match *self {
            Gamma::Fixed(g) => g,
            Gamma::Chi2 { confidence } => {
                if rank == 0 {
                    return 0.0;
                }
                ChiSquared::new(rank as f64)
                    .expect("positive dof")
                    .inverse_cdf(confidence)
                    .sqrt()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub d_pcm: f64,
    /// Dimension of the observable loop subspace.
    pub rank: usize,
    pub threshold: f64,
    pub consistent: bool,
    /// The loop rotation was too close to π for the logarithm.
    pub singular: bool,
}

/// Mahalanobis norm of `xi` on the observable subspace of `cov`.
fn projected_mahalanobis(xi: &Vector6<f64>, cov: &Covariance6) -> (f64, usize) {
    let eig = cov.matrix().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    if max <= 0.0 {
        return (if xi.amax() == 0.0 { 0.0 } else { f64::INFINITY }, 0);
    }
    let floor = max * 1e-15;
    let smallest = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b.max(floor)));
    let mut d2 = 0.0;
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let l = l.max(floor);
        // information 1/l against the largest information 1/smallest
        if smallest / l < OBSERVABLE_RATIO {
            continue;
        }
        let proj = eig.eigenvectors.column(i).dot(xi);
        d2 += proj * proj / l;
        rank += 1;
    }
    (d2.sqrt(), rank)
}

/// Loop-closure test between two hypotheses from different measurements.
///
/// The pair is put in canonical (measurement, mode) order first, so the result
/// does not depend on argument order.
pub fn pairwise_consistent(
    h1: &MeasurementHypothesis,
    h2: &MeasurementHypothesis,
    ta: &Trajectory,
    tb: &Trajectory,
    gamma: &Gamma,
) -> Result<Consistency> {
    if h1.measurement == h2.measurement {
        return Err(Error::Association(format!(
            "hypotheses {}:{} and {}:{} come from the same measurement",
            h1.measurement, h1.mode, h2.measurement, h2.mode
        )));
    }
    let (h1, h2) = if (h1.measurement, h1.mode) <= (h2.measurement, h2.mode) {
        (h1, h2)
    } else {
        (h2, h1)
    };
    let (b, sb) = tb.segment(h1.beta_index, h2.beta_index);
    let (a, sa) = ta.segment(h2.alpha_index, h1.alpha_index);
    let (h2i, s2i) = invert(&h2.transform, &h2.covariance);
    let (x, sx) = compound(&h1.transform, &h1.covariance, &b, &sb);
    let (x, sx) = compound(&x, &sx, &h2i, &s2i);
    let (lp, sl) = compound(&x, &sx, &a, &sa);
    let xi = match log_map(&lp) {
        Ok(t) => t.0,
        Err(_) => {
            log::debug!(
                "loop {}:{} / {}:{} rotates by nearly pi; marked inconsistent",
                h1.measurement,
                h1.mode,
                h2.measurement,
                h2.mode
            );
            return Ok(Consistency {
                d_pcm: f64::INFINITY,
                rank: 0,
                threshold: gamma.threshold(6),
                consistent: false,
                singular: true,
            });
        }
    };
    let (d_pcm, rank) = projected_mahalanobis(&xi, &sl);
    let threshold = gamma.threshold(rank);
    Ok(Consistency {
        d_pcm,
        rank,
        threshold,
        consistent: rank > 0 && d_pcm < threshold,
        singular: false,
    })
}

/// Hypotheses with the pairwise consistency relation between them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyGraph {
    pub nodes: Vec<MeasurementHypothesis>,
    /// Symmetric, no self-loops, no edges within one measurement.
    pub adjacency: Vec<Vec<bool>>,
    /// `d_PCM` per pair (`+∞` on the diagonal and within a measurement).
    pub distances: Vec<Vec<f64>>,
    pub gamma: Gamma,
}

impl ConsistencyGraph {
    /// Tests every cross-measurement pair, in parallel.
    pub fn build(nodes: Vec<MeasurementHypothesis>, ta: &Trajectory, tb: &Trajectory, gamma: Gamma) -> Result<Self> {
        let n = nodes.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| nodes[i].measurement != nodes[j].measurement)
            .collect();
        let results = pairs
            .par_iter()
            .map(|&(i, j)| pairwise_consistent(&nodes[i], &nodes[j], ta, tb, &gamma))
            .collect::<Result<Vec<_>>>()?;
        let mut adjacency = vec![vec![false; n]; n];
        let mut distances = vec![vec![f64::INFINITY; n]; n];
        for (&(i, j), c) in pairs.iter().zip(&results) {
            adjacency[i][j] = c.consistent;
            adjacency[j][i] = c.consistent;
            distances[i][j] = c.d_pcm;
            distances[j][i] = c.d_pcm;
        }
        Ok(ConsistencyGraph {
            nodes,
            adjacency,
            distances,
            gamma,
        })
    }

    /// Graph with a given adjacency; validates the structural invariants.
    pub fn from_adjacency(nodes: Vec<MeasurementHypothesis>, adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let n = nodes.len();
        if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::State("adjacency shape does not match node count".into()));
        }
        for i in 0..n {
            if adjacency[i][i] {
                return Err(Error::State(format!("self-loop at node {i}")));
            }
            for j in 0..n {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(Error::State(format!("adjacency not symmetric at ({i}, {j})")));
                }
                if adjacency[i][j] && nodes[i].measurement == nodes[j].measurement {
                    return Err(Error::State(format!(
                        "edge between two modes of measurement {}",
                        nodes[i].measurement
                    )));
                }
            }
        }
        Ok(ConsistencyGraph {
            nodes,
            adjacency,
            distances: vec![vec![f64::INFINITY; n]; n],
            gamma: Gamma::default(),
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&e| e).count() / 2
    }
}

#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut b = Self::empty(n);
        for i in 0..n {
            b.insert(i);
        }
        b
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }

    fn and_not(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & !b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

struct CliqueSearch<'a> {
    neighbors: Vec<Bits>,
    priors: Vec<f64>,
    keys: &'a [(u32, usize)],
    best: Vec<usize>,
    best_prior: f64,
}

impl CliqueSearch<'_> {
    fn offer(&mut self, r: &[usize]) {
        let prior: f64 = r.iter().map(|&i| self.priors[i]).sum();
        let better = if r.len() != self.best.len() {
            r.len() > self.best.len()
        } else if (prior - self.best_prior).abs() > 1e-12 {
            prior > self.best_prior
        } else {
            let mut a: Vec<_> = r.iter().map(|&i| self.keys[i]).collect();
            let mut b: Vec<_> = self.best.iter().map(|&i| self.keys[i]).collect();
            a.sort_unstable();
            b.sort_unstable();
            a < b
        };
        if better {
            self.best = r.to_vec();
            self.best_prior = prior;
        }
    }

    // Bron–Kerbosch with Tomita pivoting, pruned by the best size so far.
    fn expand(&mut self, r: &mut Vec<usize>, p: Bits, mut x: Bits) {
        if p.is_empty() {
            if x.is_empty() {
                self.offer(r);
            }
            return;
        }
        if r.len() + p.count() < self.best.len() {
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .max_by_key(|&u| (p.and(&self.neighbors[u]).count(), std::cmp::Reverse(u)))
            .expect("p non-empty");
        let mut p = p;
        let branch: Vec<usize> = p.and_not(&self.neighbors[pivot]).iter().collect();
        for v in branch {
            r.push(v);
            let np = p.and(&self.neighbors[v]);
            let nx = x.and(&self.neighbors[v]);
            self.expand(r, np, nx);
            r.pop();
            p.remove(v);
            x.insert(v);
        }
    }
}

/// Node indices of the maximum clique. Ties go to the larger summed prior,
/// then to the lexicographically smaller (measurement, mode) list.
pub fn max_clique(g: &ConsistencyGraph) -> Vec<usize> {
    let n = g.nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let neighbors = (0..n)
        .map(|i| {
            let mut b = Bits::empty(n);
            for j in 0..n {
                if g.adjacency[i][j] {
                    b.insert(j);
                }
            }
            b
        })
        .collect();
    let keys: Vec<(u32, usize)> = g.nodes.iter().map(|h| (h.measurement, h.mode)).collect();
    let mut search = CliqueSearch {
        neighbors,
        priors: g.nodes.iter().map(|h| h.prior).collect(),
        keys: &keys,
        best: Vec::new(),
        best_prior: f64::NEG_INFINITY,
    };
    search.expand(&mut Vec::new(), Bits::full(n), Bits::empty(n));
    let mut best = search.best;
    best.sort_unstable();
    best
}

/// Realization given by the maximum clique.
pub fn max_consistent_set(g: &ConsistencyGraph) -> Realization {
    max_clique(g)
        .into_iter()
        .map(|i| (g.nodes[i].measurement, g.nodes[i].mode))
        .collect()
}

/// Expands every measurement into hypotheses, builds the consistency graph and
/// returns its maximum consistent set.
pub fn build_realization(
    measurements: &[CommMeasurement],
    ta: &Trajectory,
    tb: &Trajectory,
    prior: &LinkPrior,
    gamma: Gamma,
) -> Result<(Realization, ConsistencyGraph)> {
    let nodes = hypotheses(measurements, ta, tb, prior)?;
    let graph = ConsistencyGraph::build(nodes, ta, tb, gamma)?;
    let realization = max_consistent_set(&graph);
    if realization.len() < 2 {
        log::warn!(
            "only {} consistent communication measurement(s); relative heading rests on the heading prior",
            realization.len()
        );
    }
    Ok((realization, graph))
}
