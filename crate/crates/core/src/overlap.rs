//! Branch-and-bound search for the region where two trajectories overlap.
//!
//! Each side is filtered against the other side's bounding box inflated by
//! `d_buffer`, the larger side is split with k-means, and the search recurses
//! until clusters are small. Any pair the Mahalanobis gate can admit lies
//! within `d_buffer` of each other, so no such pair is ever cut.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::max_eigenvalue_sym3;
use crate::pose_graph::{RouteTables, SharedEstimate, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl BoundingBox {
    /// Box around `points`; `None` when empty.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold(BoundingBox { min: first, max: first }, |b, p| BoundingBox {
            min: b.min.inf(p),
            max: b.max.sup(p),
        }))
    }

    pub fn inflate(&self, d: f64) -> Self {
        let d = Vector3::repeat(d);
        BoundingBox {
            min: self.min - d,
            max: self.max + d,
        }
    }

    pub fn union(&self, o: &BoundingBox) -> Self {
        BoundingBox {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Pose indices on α.
    pub alpha: Vec<usize>,
    /// Pose indices on β.
    pub beta: Vec<usize>,
    /// Buffered bounding box of all members, α frame.
    pub bbox: BoundingBox,
    pub depth: usize,
}

impl Cluster {
    pub fn pair_count(&self) -> usize {
        self.alpha.len() * self.beta.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Mahalanobis threshold `D`.
    pub d_threshold: f64,
    pub sensor_range: f64,
    pub sigma_ub: f64,
    /// Largest displacement of a β pose between its anchor placement and any
    /// other link's placement.
    #[serde(default)]
    pub link_spread: f64,
    pub k_split: usize,
    pub min_cluster: usize,
    pub max_depth: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            d_threshold: 7.815_f64.sqrt(),
            sensor_range: 0.0,
            sigma_ub: 0.0,
            link_spread: 0.0,
            k_split: 2,
            min_cluster: 16,
            max_depth: 12,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_threshold > 0.0) {
            return Err(Error::Config(format!("d_threshold must be positive, got {}", self.d_threshold)));
        }
        if !(self.sensor_range >= 0.0) || !(self.sigma_ub >= 0.0) || !(self.link_spread >= 0.0) {
            return Err(Error::Config("sensor_range, sigma_ub and link_spread must be non-negative".into()));
        }
        if self.k_split < 2 {
            return Err(Error::Config(format!("k_split must be at least 2, got {}", self.k_split)));
        }
        if self.min_cluster == 0 {
            return Err(Error::Config("min_cluster must be positive".into()));
        }
        Ok(())
    }
}

/// `D·σ_UB + R_sensor`, plus the link spread when several links route pairs.
pub fn buffer_distance(s: &SearchParams) -> f64 {
    s.d_threshold * s.sigma_ub + s.sensor_range + s.link_spread
}

/// Terms of the worst-case positional uncertainty bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaBound {
    /// Largest α position variance relative to any link endpoint.
    pub alpha: f64,
    /// Largest link contribution, lever arm included.
    pub link: f64,
    /// Largest β position variance relative to any link endpoint.
    pub beta: f64,
    pub sigma_ub: f64,
}

/// Upper bound on `√λmax` of every routed pair's separation covariance.
pub fn sigma_upper_bound(ta: &Trajectory, tb: &Trajectory, tables: &RouteTables) -> Result<SigmaBound> {
    if !ta.is_solved() || !tb.is_solved() {
        return Err(Error::State("sigma bound needs solved trajectories with marginals".into()));
    }
    let max_over = |it: &mut dyn Iterator<Item = &nalgebra::Matrix3<f64>>| {
        it.map(max_eigenvalue_sym3).fold(0.0_f64, f64::max)
    };
    let mut alpha = 0.0_f64;
    let mut link = 0.0_f64;
    let mut beta = 0.0_f64;
    for (li, l) in tables.links.iter().enumerate() {
        alpha = alpha.max(max_over(&mut tables.alpha_position_covariances(li)));
        beta = beta.max(max_over(&mut tables.beta_position_covariances(li).iter()));
        let rho = max_eigenvalue_sym3(&l.covariance.translational()).max(0.0).sqrt();
        let omega = max_eigenvalue_sym3(&l.covariance.rotational()).max(0.0).sqrt();
        link = link.max((rho + tables.beta_lever(li) * omega).powi(2));
    }
    Ok(SigmaBound {
        alpha,
        link,
        beta,
        sigma_ub: (alpha + link + beta).sqrt(),
    })
}

/// β positions in α's frame through the anchor link, and the largest distance
/// any other link would move them.
pub fn anchored_positions(tables: &RouteTables, shared: &SharedEstimate) -> Result<(Vec<Vector3<f64>>, f64)> {
    let anchor = tables
        .links
        .iter()
        .position(|l| l.measurement == shared.anchor.measurement)
        .ok_or(Error::NoLink)?;
    let base = tables.beta_in_alpha(anchor);
    let spread = (0..tables.links.len())
        .filter(|&li| li != anchor)
        .flat_map(|li| {
            tables
                .beta_in_alpha(li)
                .into_iter()
                .zip(&base)
                .map(|(a, b)| (a - b).norm())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    Ok((base, spread))
}

fn sq_dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm_squared()
}

/// K-means with farthest-point initialization; returns index groups into
/// `members`, none empty.
fn kmeans(points: &[Vector3<f64>], members: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = members.len();
    if n <= 1 || k <= 1 {
        return vec![members.to_vec()];
    }
    let pts: Vec<Vector3<f64>> = members.iter().map(|&i| points[i]).collect();
    let mean = pts.iter().sum::<Vector3<f64>>() / n as f64;
    let farthest = |score: &dyn Fn(&Vector3<f64>) -> f64| {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in pts.iter().enumerate() {
            let s = score(p);
            if s > best.0 {
                best = (s, i);
            }
        }
        best
    };
    let mut centers = vec![pts[farthest(&|p| sq_dist(p, &mean)).1]];
    while centers.len() < k.min(n) {
        let (d, i) = farthest(&|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min));
        if d <= 0.0 {
            break;
        }
        centers.push(pts[i]);
    }
    if centers.len() == 1 {
        return vec![members.to_vec()];
    }
    let nearest = |p: &Vector3<f64>, centers: &[Vector3<f64>]| {
        let mut best = (f64::INFINITY, 0);
        for (ci, c) in centers.iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.0 {
                best = (d, ci);
            }
        }
        best.1
    };
    let mut assign: Vec<usize> = pts.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..50 {
        let mut sums = vec![Vector3::zeros(); centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &a) in pts.iter().zip(&assign) {
            sums[a] += p;
            counts[a] += 1;
        }
        for c in 0..centers.len() {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        let next: Vec<usize> = pts.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let mut groups = vec![Vec::new(); centers.len()];
    for (&m, &a) in members.iter().zip(&assign) {
        groups[a].push(m);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Sum of squared distances to each group's centroid.
pub fn kmeans_objective(points: &[Vector3<f64>], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let c = g.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / g.len() as f64;
            g.iter().map(|&i| sq_dist(&points[i], &c)).sum::<f64>()
        })
        .sum()
}

/// Partitions `members` of `points` into at most `k` spatial groups.
pub fn partition(points: &[Vector3<f64>], members: &[usize], k: usize) -> Vec<Vec<usize>> {
    kmeans(points, members, k)
}

fn cluster_box(alpha: &[Vector3<f64>], beta: &[Vector3<f64>], a: &[usize], b: &[usize], buffer: f64) -> BoundingBox {
    BoundingBox::around(a.iter().map(|&i| &alpha[i]).chain(b.iter().map(|&i| &beta[i])))
        .map(|b| b.inflate(buffer))
        .unwrap_or(BoundingBox {
            min: Vector3::zeros(),
            max: Vector3::zeros(),
        })
}

/// Splits the larger side of `c` into at most `k` children.
pub fn split_cluster(alpha: &[Vector3<f64>], beta: &[Vector3<f64>], c: &Cluster, k: usize, buffer: f64) -> Vec<Cluster> {
    let split_alpha = c.alpha.len() >= c.beta.len();
    let (points, members) = if split_alpha { (alpha, &c.alpha) } else { (beta, &c.beta) };
    kmeans(points, members, k)
        .into_iter()
        .map(|g| {
            let (a, b) = if split_alpha { (g, c.beta.clone()) } else { (c.alpha.clone(), g) };
            Cluster {
                bbox: cluster_box(alpha, beta, &a, &b, buffer),
                alpha: a,
                beta: b,
                depth: c.depth + 1,
            }
        })
        .collect()
}

/// Keeps each side's members inside the other side's buffered box; `None`
/// when either side empties.
fn filter(alpha: &[Vector3<f64>], beta: &[Vector3<f64>], c: &Cluster, buffer: f64) -> Option<Cluster> {
    let bb = BoundingBox::around(c.beta.iter().map(|&i| &beta[i]))?.inflate(buffer);
    let a: Vec<usize> = c.alpha.iter().copied().filter(|&i| bb.contains(&alpha[i])).collect();
    let ab = BoundingBox::around(a.iter().map(|&i| &alpha[i]))?.inflate(buffer);
    let b: Vec<usize> = c.beta.iter().copied().filter(|&i| ab.contains(&beta[i])).collect();
    if b.is_empty() {
        return None;
    }
    Some(Cluster {
        bbox: cluster_box(alpha, beta, &a, &b, buffer),
        alpha: a,
        beta: b,
        depth: c.depth,
    })
}

fn refine(alpha: &[Vector3<f64>], beta: &[Vector3<f64>], c: Cluster, p: &SearchParams, buffer: f64) -> Vec<Cluster> {
    let Some(c) = filter(alpha, beta, &c, buffer) else {
        return Vec::new();
    };
    let larger = c.alpha.len().max(c.beta.len());
    if larger <= p.min_cluster || c.depth >= p.max_depth {
        return vec![c];
    }
    let children = split_cluster(alpha, beta, &c, p.k_split, buffer);
    if children.len() < 2 {
        return vec![c];
    }
    children
        .into_par_iter()
        .flat_map_iter(|ch| refine(alpha, beta, ch, p, buffer))
        .collect()
}

/// Clusters of α and β poses (positions in α's frame) that may hold gated pairs.
/// Leaves partition the surviving pair space, in deterministic order.
pub fn find_overlap_clusters(alpha: &[Vector3<f64>], beta: &[Vector3<f64>], params: &SearchParams) -> Vec<Cluster> {
    if alpha.is_empty() || beta.is_empty() {
        return Vec::new();
    }
    let buffer = buffer_distance(params);
    let root = Cluster {
        alpha: (0..alpha.len()).collect(),
        beta: (0..beta.len()).collect(),
        bbox: cluster_box(alpha, beta, &[], &[], 0.0),
        depth: 0,
    };
    refine(alpha, beta, root, params, buffer)
}
