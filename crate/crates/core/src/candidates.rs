//! Mahalanobis gating of pose pairs into loop-closure candidates, and the
//! metrics used to score them against ground truth.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::Realization;
use crate::overlap::Cluster;
use crate::pose_graph::{RelativeEstimate, RouteTables, Trajectory};
use crate::{Covariance6, Pose};

/// Smallest eigenvalue a gate covariance may have.
pub const MIN_GATE_EIGENVALUE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub d_threshold: f64,
    /// Separation up to this distance is free; only the excess is gated.
    pub sensor_range: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            d_threshold: 7.815_f64.sqrt(),
            sensor_range: 0.0,
        }
    }
}

/// `√(vᵀ Σ⁻¹ v)` with `v` the part of `x` beyond `sensor_range`.
pub fn mahalanobis_distance(x: &Vector3<f64>, cov: &Matrix3<f64>, sensor_range: f64) -> Result<f64> {
    let norm = x.norm();
    if norm <= sensor_range {
        return Ok(0.0);
    }
    let chol = cov.cholesky().ok_or(Error::SingularGate)?;
    let eig = cov.symmetric_eigenvalues();
    if eig.min() <= MIN_GATE_EIGENVALUE {
        return Err(Error::SingularGate);
    }
    let v = x * ((norm - sensor_range) / norm);
    Ok(v.dot(&chol.solve(&v)).max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub p_index: usize,
    pub k_index: usize,
    pub d_mh: f64,
    /// `T^p_k`.
    pub relative: Pose,
    /// Covariance of `relative`, body frame of `k`.
    pub covariance: Covariance6,
    pub route_link: u32,
}

/// Gates one routed pair; `Ok(None)` when rejected.
pub fn mahalanobis_gate(p: usize, k: usize, r: &RelativeEstimate, params: &GateParams) -> Result<Option<CandidatePair>> {
    let d_mh = mahalanobis_distance(&r.separation, &r.separation_covariance, params.sensor_range)?;
    Ok((d_mh < params.d_threshold).then_some(CandidatePair {
        p_index: p,
        k_index: k,
        d_mh,
        relative: r.pose,
        covariance: r.covariance,
        route_link: r.link,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub realization: Realization,
    /// Sorted by `(p_index, k_index)`.
    pub pairs: Vec<CandidatePair>,
    pub d_threshold: f64,
    pub sensor_range: f64,
    /// Pairs passed through the gate.
    pub evaluated_pairs: usize,
    /// Pairs dropped for a singular covariance.
    pub skipped_pairs: usize,
}

impl CandidateSet {
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|c| (c.p_index, c.k_index)).collect()
    }
}

enum Gated {
    Admitted(usize, usize, f64),
    Rejected,
    Singular,
}

fn gate_pair(tables: &RouteTables, p: usize, k: usize, params: &GateParams) -> Gated {
    let (_, x, cov) = tables.separation(p, k);
    match mahalanobis_distance(&x, &cov, params.sensor_range) {
        Ok(d) if d < params.d_threshold => Gated::Admitted(p, k, d),
        Ok(_) => Gated::Rejected,
        Err(_) => {
            log::debug!("pair ({p}, {k}) skipped: singular gate covariance");
            Gated::Singular
        }
    }
}

fn assemble(
    tables: &RouteTables,
    realization: &Realization,
    params: &GateParams,
    pairs: Vec<(usize, usize)>,
) -> CandidateSet {
    let evaluated_pairs = pairs.len();
    let gated: Vec<Gated> = pairs.par_iter().map(|&(p, k)| gate_pair(tables, p, k, params)).collect();
    let skipped_pairs = gated.iter().filter(|g| matches!(g, Gated::Singular)).count();
    let mut admitted: Vec<CandidatePair> = gated
        .into_par_iter()
        .filter_map(|g| match g {
            Gated::Admitted(p, k, d_mh) => {
                let r = tables.relative(p, k);
                Some(CandidatePair {
                    p_index: p,
                    k_index: k,
                    d_mh,
                    relative: r.pose,
                    covariance: r.covariance,
                    route_link: r.link,
                })
            }
            _ => None,
        })
        .collect();
    admitted.sort_by_key(|c| (c.p_index, c.k_index));
    CandidateSet {
        realization: realization.clone(),
        pairs: admitted,
        d_threshold: params.d_threshold,
        sensor_range: params.sensor_range,
        evaluated_pairs,
        skipped_pairs,
    }
}

/// Gates the cross product of every cluster's α and β members.
pub fn build_candidate_set(
    clusters: &[Cluster],
    tables: &RouteTables,
    realization: &Realization,
    params: &GateParams,
) -> Result<CandidateSet> {
    if realization.is_empty() {
        return Err(Error::NoLink);
    }
    let mut pairs: Vec<(usize, usize)> = clusters
        .iter()
        .flat_map(|c| c.alpha.iter().flat_map(move |&p| c.beta.iter().map(move |&k| (p, k))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok(assemble(tables, realization, params, pairs))
}

/// Gates every α/β pair, bypassing the overlap search.
pub fn brute_force_candidate_set(
    tables: &RouteTables,
    realization: &Realization,
    params: &GateParams,
) -> Result<CandidateSet> {
    if realization.is_empty() {
        return Err(Error::NoLink);
    }
    let (n, m) = (tables.alpha_len(), tables.beta_len());
    let pairs = (0..n).flat_map(|p| (0..m).map(move |k| (p, k))).collect();
    Ok(assemble(tables, realization, params, pairs))
}

/// Ground-truth poses of both robots in one world frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha: Vec<Pose>,
    pub beta: Vec<Pose>,
}

impl GroundTruth {
    fn check(&self) -> Result<()> {
        let frame = |p: &[Pose]| p.first().map(|q| q.frame_from);
        match (frame(&self.alpha), frame(&self.beta)) {
            (Some(a), Some(b)) if a != b => Err(Error::FrameMismatch {
                left: a,
                right: b,
            }),
            _ => Ok(()),
        }
    }

    /// Index pairs closer than `radius`.
    pub fn true_pairs(&self, radius: f64) -> Vec<(usize, usize)> {
        let r2 = radius * radius;
        (0..self.alpha.len())
            .into_par_iter()
            .flat_map_iter(|p| {
                let xp = self.alpha[p].translation;
                self.beta
                    .iter()
                    .enumerate()
                    .filter(move |(_, b)| (b.translation - xp).norm_squared() <= r2)
                    .map(move |(k, _)| (p, k))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub total_pairs: usize,
    pub evaluated_pairs: usize,
    pub gated_pairs: usize,
    pub true_pairs: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub missed_true: usize,
    /// False pairs kept out of the candidate set, over all false pairs.
    pub rejection_rate: f64,
    pub miss_rate: f64,
    /// α poses with at least one true pair.
    pub true_places: usize,
    /// α poses with true pairs none of which were gated.
    pub missed_places: usize,
    pub skipped_pairs: usize,
    pub ate: f64,
    pub realization: Realization,
    /// Wall-clock seconds per stage; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

/// Scores `g` against ground truth; a true pair is one within `true_lc_radius`.
pub fn evaluate(
    g: &CandidateSet,
    ta: &Trajectory,
    tb: &Trajectory,
    relative: Option<&Pose>,
    truth: &GroundTruth,
    true_lc_radius: f64,
) -> Result<EvalReport> {
    truth.check()?;
    if truth.alpha.len() != ta.len() || truth.beta.len() != tb.len() {
        return Err(Error::Association(format!(
            "ground truth has {}/{} poses, estimate {}/{}",
            truth.alpha.len(),
            truth.beta.len(),
            ta.len(),
            tb.len()
        )));
    }
    let truth_pairs = truth.true_pairs(true_lc_radius);
    let gated = g.index_pairs();
    let true_positives = gated.iter().filter(|p| truth_pairs.binary_search(p).is_ok()).count();
    let total_pairs = ta.len() * tb.len();
    let false_pairs = total_pairs - truth_pairs.len();
    let false_positives = gated.len() - true_positives;
    let missed_true = truth_pairs.len() - true_positives;

    let mut place_total = BTreeMap::<usize, bool>::new();
    for &(p, k) in &truth_pairs {
        let hit = gated.binary_search(&(p, k)).is_ok();
        *place_total.entry(p).or_default() |= hit;
    }
    Ok(EvalReport {
        seed: 0,
        total_pairs,
        evaluated_pairs: g.evaluated_pairs,
        gated_pairs: gated.len(),
        true_pairs: truth_pairs.len(),
        true_positives,
        false_positives,
        missed_true,
        rejection_rate: if false_pairs == 0 {
            1.0
        } else {
            (false_pairs - false_positives) as f64 / false_pairs as f64
        },
        miss_rate: if truth_pairs.is_empty() {
            0.0
        } else {
            missed_true as f64 / truth_pairs.len() as f64
        },
        true_places: place_total.len(),
        missed_places: place_total.values().filter(|&&hit| !hit).count(),
        skipped_pairs: g.skipped_pairs,
        ate: ate(ta, tb, relative, truth)?,
        realization: g.realization.clone(),
        timings: BTreeMap::new(),
    })
}

/// Rigid transform `(R, t)` minimizing `Σ‖R a + t - b‖²`.
pub fn kabsch(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = a.len().max(1) as f64;
    let ca = a.iter().sum::<Vector3<f64>>() / n;
    let cb = b.iter().sum::<Vector3<f64>>() / n;
    let h = a
        .iter()
        .zip(b)
        .fold(Matrix3::zeros(), |h, (x, y)| h + (x - ca) * (y - cb).transpose());
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    (r, cb - r * ca)
}

/// RMSE of positions after one rigid alignment of α's frame to the truth,
/// with β placed through `relative` (`T^α_β`). Without it only α is scored.
pub fn ate(ta: &Trajectory, tb: &Trajectory, relative: Option<&Pose>, truth: &GroundTruth) -> Result<f64> {
    if truth.alpha.len() != ta.len() || truth.beta.len() != tb.len() {
        return Err(Error::Association("trajectory and ground-truth lengths differ".into()));
    }
    let mut est: Vec<Vector3<f64>> = ta.poses.iter().map(|p| p.translation).collect();
    let mut gt: Vec<Vector3<f64>> = truth.alpha.iter().map(|p| p.translation).collect();
    if let Some(rel) = relative {
        est.extend(tb.poses.iter().map(|p| rel.transform_point(&p.translation)));
        gt.extend(truth.beta.iter().map(|p| p.translation));
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let (r, t) = kabsch(&est, &gt);
    let sse: f64 = est.iter().zip(&gt).map(|(e, g)| (r * e + t - g).norm_squared()).sum();
    Ok((sse / est.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_separation_is_zero() {
        let d = mahalanobis_distance(&Vector3::zeros(), &Matrix3::identity(), 0.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn euclidean_case() {
        let d = mahalanobis_distance(&Vector3::new(3.0, 4.0, 0.0), &Matrix3::identity(), 0.0).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn axis_scaling() {
        let cov = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        let d = mahalanobis_distance(&Vector3::new(2.0, 0.0, 0.0), &cov, 0.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sensor_range_removes_excess() {
        let d = mahalanobis_distance(&Vector3::new(13.0, 0.0, 0.0), &Matrix3::identity(), 10.0).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        assert_eq!(mahalanobis_distance(&Vector3::new(9.0, 0.0, 0.0), &Matrix3::zeros(), 10.0).unwrap(), 0.0);
    }

    #[test]
    fn singular_covariance_rejected() {
        let cov = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1e-14));
        assert!(matches!(
            mahalanobis_distance(&Vector3::new(1.0, 0.0, 0.0), &cov, 0.0),
            Err(Error::SingularGate)
        ));
    }

    #[test]
    fn kabsch_recovers_rigid_motion() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let t = Vector3::new(1.0, -2.0, 0.5);
        let a: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.1, (i % 3) as f64))
            .collect();
        let b: Vec<_> = a.iter().map(|x| r * x + t).collect();
        let (re, te) = kabsch(&a, &b);
        assert!((re - r).norm() < 1e-9);
        assert!((te - t).norm() < 1e-9);
    }
}
