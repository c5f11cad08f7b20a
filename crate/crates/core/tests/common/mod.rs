#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wiclosure::factors::Endpoint;
use wiclosure::pcm::ConsistencyGraph;
use wiclosure::pose_graph::{MeasurementHypothesis, SharedEstimate, Trajectory};
use wiclosure::{Covariance6, OdometryFactor, Pose, Twist};

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<const N: usize>(rng: &mut ChaCha8Rng) -> SMatrix<f64, N, 1> {
    SMatrix::from_fn(|_, _| StandardNormal.sample(rng))
}

pub fn random_twist(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Twist {
    let v: Vector6<f64> = normal_vec(rng);
    Twist::new(
        Vector3::new(v[0], v[1], v[2]) * rot,
        Vector3::new(v[3], v[4], v[5]) * trans,
    )
}

pub fn random_pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Pose {
    wiclosure::lie::exp_map(&random_twist(rng, rot, trans))
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd<const N: usize>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> SMatrix<f64, N, N> {
    let a = DMatrix::<f64>::from_fn(N, N, |_, _| StandardNormal.sample(rng));
    let q = a.qr().q();
    let d = DVector::<f64>::from_fn(N, |_, _| rng.random_range(lo..hi));
    let m = &q * DMatrix::from_diagonal(&d) * q.transpose();
    SMatrix::from_iterator(m.iter().copied())
}

/// Draws from `N(0, cov)`.
pub struct Gaussian<const N: usize> {
    l: SMatrix<f64, N, N>,
}

impl<const N: usize> Gaussian<N> {
    pub fn new(cov: &SMatrix<f64, N, N>) -> Self {
        let l = cov.cholesky().expect("positive definite").l();
        Gaussian { l }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SMatrix<f64, N, 1> {
        self.l * normal_vec::<N>(rng)
    }
}

/// Von Mises deviate around zero by rejection from the uniform density.
pub fn von_mises(rng: &mut ChaCha8Rng, kappa: f64) -> f64 {
    loop {
        let t = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let u: f64 = rng.random();
        if u < (kappa * (t.cos() - 1.0)).exp() {
            return t;
        }
    }
}

pub struct Moments<const N: usize> {
    n: usize,
    sum: SMatrix<f64, N, 1>,
    outer: SMatrix<f64, N, N>,
}

impl<const N: usize> Moments<N> {
    pub fn new() -> Self {
        Moments {
            n: 0,
            sum: SMatrix::zeros(),
            outer: SMatrix::zeros(),
        }
    }

    pub fn push(&mut self, x: &SMatrix<f64, N, 1>) {
        self.n += 1;
        self.sum += x;
        self.outer += x * x.transpose();
    }

    pub fn covariance(&self) -> SMatrix<f64, N, N> {
        let n = self.n as f64;
        let mean = self.sum / n;
        (self.outer - mean * mean.transpose() * n) / (n - 1.0)
    }
}

pub fn frobenius_rel<const N: usize>(estimate: &SMatrix<f64, N, N>, reference: &SMatrix<f64, N, N>) -> f64 {
    (estimate - reference).norm() / reference.norm()
}

/// Chain of `n` poses with random planar-ish steps and per-step noise `noise`.
pub fn random_chain(rng: &mut ChaCha8Rng, robot: u32, n: usize, noise: &Covariance6) -> Trajectory {
    let odometry = (0..n - 1)
        .map(|i| {
            let yaw = rng.random_range(-0.3..0.3);
            let step = Pose::from_yaw(yaw, Vector3::new(rng.random_range(0.5..1.5), rng.random_range(-0.2..0.2), 0.0));
            OdometryFactor::new(i, i + 1, step, *noise).unwrap()
        })
        .collect();
    Trajectory::new(robot, odometry).unwrap()
}

pub fn hypothesis(measurement: u32, mode: usize, alpha_index: usize, beta_index: usize, transform: Pose, covariance: Covariance6) -> MeasurementHypothesis {
    MeasurementHypothesis {
        measurement,
        mode,
        alpha_index,
        beta_index,
        range: transform.translation.norm(),
        prior: 1.0,
        transform,
        covariance,
    }
}

pub fn shared_from(ta: &Trajectory, tb: &Trajectory, links: Vec<MeasurementHypothesis>) -> SharedEstimate {
    let anchor = links[0].clone();
    SharedEstimate {
        alpha: ta.robot,
        beta: tb.robot,
        relative: anchor.placement(ta, tb),
        covariance: anchor.covariance,
        anchor,
        links,
    }
}

pub fn endpoint(robot: u32, index: usize) -> Endpoint {
    Endpoint { robot, index }
}

pub fn isotropic3(s: f64) -> Matrix3<f64> {
    Matrix3::identity() * s * s
}

/// Random consistency graph over `n` hypotheses grouped into measurements of
/// one to four modes, with priors on a coarse grid so that ties occur.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> ConsistencyGraph {
    let mut nodes = Vec::with_capacity(n);
    let mut m = 0u32;
    while nodes.len() < n {
        let modes = rng.random_range(1..=4).min(n - nodes.len());
        for mode in 0..modes {
            let mut h = hypothesis(m, mode, 0, 0, Pose::identity(), Covariance6::zeros());
            h.prior = rng.random_range(1..=4) as f64 * 0.25 / modes as f64;
            nodes.push(h);
        }
        m += 1;
    }
    let mut adjacency = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if nodes[i].measurement != nodes[j].measurement && rng.random::<f64>() < density {
                adjacency[i][j] = true;
                adjacency[j][i] = true;
            }
        }
    }
    ConsistencyGraph::from_adjacency(nodes, adjacency).unwrap()
}

/// Best clique by enumerating all `2ⁿ` vertex subsets, ranked by size, then
/// summed prior (within 1e-12), then lexicographically smaller (measurement, mode) list.
pub fn exhaustive_clique(g: &ConsistencyGraph) -> Vec<usize> {
    let n = g.nodes.len();
    assert!(n <= 25);
    let nbr: Vec<u32> = (0..n)
        .map(|i| (0..n).filter(|&j| g.adjacency[i][j]).fold(0u32, |acc, j| acc | (1 << j)))
        .collect();
    let total = 1usize << n;
    let mut clique = vec![false; total];
    clique[0] = true;
    let mut best_size = 0;
    for mask in 1..total {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        clique[mask] = clique[rest] && (nbr[low] as usize & rest) == rest;
        if clique[mask] {
            best_size = best_size.max(mask.count_ones());
        }
    }
    let keys = |mask: usize| -> Vec<(u32, usize)> {
        let mut k: Vec<_> = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| (g.nodes[i].measurement, g.nodes[i].mode))
            .collect();
        k.sort_unstable();
        k
    };
    let prior = |mask: usize| -> f64 { (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| g.nodes[i].prior).sum() };
    let mut best: Option<usize> = None;
    for (mask, _) in clique.iter().enumerate().filter(|&(m, &c)| c && m.count_ones() == best_size) {
        best = Some(match best {
            None => mask,
            Some(b) => {
                let (pm, pb) = (prior(mask), prior(b));
                if pm > pb + 1e-12 || ((pm - pb).abs() <= 1e-12 && keys(mask) < keys(b)) {
                    mask
                } else {
                    b
                }
            }
        });
    }
    let b = best.unwrap_or(0);
    (0..n).filter(|&i| b >> i & 1 == 1).collect()
}

/// Central difference of a scalar function along each coordinate.
pub fn central_gradient(f: impl Fn(&Vector3<f64>) -> f64, x: &Vector3<f64>, h: f64) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for i in 0..3 {
        let mut a = *x;
        let mut b = *x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

pub fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}
