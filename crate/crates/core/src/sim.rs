//! Scenario synthesis: ground-truth trajectories, noisy odometry, and
//! range/bearing measurements with multipath.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with `ScenarioConfig::seed`,
//! consumed in a fixed order, so a config reproduces its data exactly.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{Vector3, Vector6};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::candidates::GroundTruth;
use crate::error::{Error, Result};
use crate::factors::{LinkPrior, RangeFactor as GenericRange};
use crate::io;
use crate::lie::Twist;
use crate::pcm::Gamma;
use crate::pose_graph::{SolverParams, Trajectory};
use crate::{AoaMode, CommMeasurement, Covariance6, Endpoint, OdometryFactor, Pose};

/// Robot id of the first trajectory.
pub const ALPHA: u32 = 0;
/// Robot id of the second trajectory.
pub const BETA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// Two polylines of `[x, y]` or `[x, y, z]` points resampled every `step` meters.
    Waypoints {
        alpha: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
        step: f64,
    },
    /// One polyline resampled and cut into `parts` consecutive segments.
    Split {
        waypoints: Vec<Vec<f64>>,
        step: f64,
        parts: usize,
        alpha_part: usize,
        beta_part: usize,
    },
    /// Two TUM files.
    Tum { alpha: PathBuf, beta: PathBuf },
    /// One TUM file cut into `parts` segments.
    TumSplit {
        path: PathBuf,
        parts: usize,
        alpha_part: usize,
        beta_part: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometryNoise {
    /// Per-step std of each translation axis (m).
    pub translation_sigma: f64,
    /// Per-step std of each rotation axis (rad).
    pub rotation_sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommConfig {
    /// Distance traveled by α between measurements (m).
    pub interval: f64,
    /// Largest range at which a measurement is taken (m).
    pub max_range: f64,
    /// Alternate which robot receives.
    #[serde(default = "yes")]
    pub alternate_receiver: bool,
    #[serde(default)]
    pub max_measurements: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultipathConfig {
    /// AOA modes per measurement, direct path included.
    pub modes: usize,
    /// Measurements whose direct path is absent from the modes.
    #[serde(default)]
    pub missing_direct: usize,
    pub min_offset_deg: f64,
    pub max_offset_deg: f64,
    /// Permit offsets within two bearing stds of the direct path.
    #[serde(default)]
    pub allow_ambiguous: bool,
}

impl Default for MultipathConfig {
    fn default() -> Self {
        MultipathConfig {
            modes: 1,
            missing_direct: 0,
            min_offset_deg: 30.0,
            max_offset_deg: 150.0,
            allow_ambiguous: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_d")]
    pub d_threshold: f64,
    #[serde(default)]
    pub gamma: Gamma,
    #[serde(default)]
    pub standard_gaussian: bool,
    #[serde(default = "default_k")]
    pub k_split: usize,
    #[serde(default = "default_min_cluster")]
    pub min_cluster: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub solver: SolverParams,
}

fn default_d() -> f64 {
    7.815_f64.sqrt()
}

fn default_k() -> usize {
    2
}

fn default_min_cluster() -> usize {
    16
}

fn default_depth() -> usize {
    12
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            d_threshold: default_d(),
            gamma: Gamma::default(),
            standard_gaussian: false,
            k_split: default_k(),
            min_cluster: default_min_cluster(),
            max_depth: default_depth(),
            solver: SolverParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub trajectory: TrajectorySpec,
    pub odometry: OdometryNoise,
    pub range_sigma: f64,
    pub aoa_sigma_deg: f64,
    pub comm: CommConfig,
    #[serde(default)]
    pub multipath: MultipathConfig,
    #[serde(default)]
    pub link_prior: LinkPrior,
    pub true_lc_radius: f64,
    pub sensor_range: f64,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Measurements equal the geometry exactly; the stds still shape the model.
    #[serde(default)]
    pub noise_free: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioData {
    pub seed: u64,
    /// World-frame poses of both robots.
    pub truth: GroundTruth,
    pub alpha_odometry: Vec<OdometryFactor>,
    pub beta_odometry: Vec<OdometryFactor>,
    pub measurements: Vec<CommMeasurement>,
    /// Pairs within `true_lc_radius` in ground truth, sorted.
    pub true_pairs: Vec<(usize, usize)>,
}

impl ScenarioData {
    /// Dead-reckoned, unsolved trajectories of α and β.
    pub fn trajectories(&self) -> Result<(Trajectory, Trajectory)> {
        Ok((
            Trajectory::new(ALPHA, self.alpha_odometry.clone())?,
            Trajectory::new(BETA, self.beta_odometry.clone())?,
        ))
    }
}

impl ScenarioConfig {
    /// Reads a JSON config; relative trajectory file paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: ScenarioConfig = io::load_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut c.trajectory {
            TrajectorySpec::Tum { alpha, beta } => {
                resolve(alpha);
                resolve(beta);
            }
            TrajectorySpec::TumSplit { path, .. } => resolve(path),
            _ => {}
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("odometry.translation_sigma", self.odometry.translation_sigma),
            ("odometry.rotation_sigma", self.odometry.rotation_sigma),
            ("range_sigma", self.range_sigma),
            ("aoa_sigma_deg", self.aoa_sigma_deg),
            ("link_prior.z_sigma", self.link_prior.z_sigma),
            ("link_prior.tilt_sigma", self.link_prior.tilt_sigma),
            ("link_prior.heading_sigma", self.link_prior.heading_sigma),
            ("comm.interval", self.comm.interval),
            ("comm.max_range", self.comm.max_range),
            ("pipeline.d_threshold", self.pipeline.d_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.true_lc_radius >= 0.0) || !(self.sensor_range >= 0.0) {
            return Err(Error::Config("true_lc_radius and sensor_range must be non-negative".into()));
        }
        let m = &self.multipath;
        if m.modes == 0 {
            return Err(Error::Config("multipath.modes must be at least 1".into()));
        }
        if m.missing_direct > 0 && m.modes < 1 {
            return Err(Error::Config("measurements without a direct path need modes".into()));
        }
        if !(0.0..=180.0).contains(&m.min_offset_deg) || m.max_offset_deg < m.min_offset_deg || m.max_offset_deg > 180.0 {
            return Err(Error::Config(format!(
                "multipath offsets [{}, {}] must lie within [0, 180]",
                m.min_offset_deg, m.max_offset_deg
            )));
        }
        if m.modes > 1 && !m.allow_ambiguous && m.min_offset_deg < 2.0 * self.aoa_sigma_deg {
            return Err(Error::Config(format!(
                "multipath.min_offset_deg {} is within two bearing stds; set allow_ambiguous to permit it",
                m.min_offset_deg
            )));
        }
        if let Gamma::Chi2 { confidence } = self.pipeline.gamma {
            if !(confidence > 0.0 && confidence < 1.0) {
                return Err(Error::Config(format!("gamma confidence {confidence} outside (0, 1)")));
            }
        }
        if self.pipeline.k_split < 2 || self.pipeline.min_cluster == 0 {
            return Err(Error::Config("k_split must be ≥ 2 and min_cluster positive".into()));
        }
        match &self.trajectory {
            TrajectorySpec::Waypoints { step, .. } | TrajectorySpec::Split { step, .. } if !(*step > 0.0) => {
                Err(Error::Config(format!("step must be positive, got {step}")))
            }
            TrajectorySpec::Split {
                parts,
                alpha_part,
                beta_part,
                ..
            }
            | TrajectorySpec::TumSplit {
                parts,
                alpha_part,
                beta_part,
                ..
            } if alpha_part >= parts || beta_part >= parts || alpha_part == beta_part => Err(Error::Config(
                format!("parts {alpha_part} and {beta_part} must be distinct and below {parts}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn aoa_sigma(&self) -> f64 {
        self.aoa_sigma_deg.to_radians()
    }

    pub fn odometry_covariance(&self) -> Covariance6 {
        let (r, t) = (self.odometry.rotation_sigma, self.odometry.translation_sigma);
        Covariance6::isotropic(r, t)
    }

    /// Two crossing paths of `n_alpha` and `n_beta` one-meter steps, with
    /// σ_d = 0.5 m and σ_φ = 10°.
    pub fn crossing(seed: u64, n_alpha: usize, n_beta: usize) -> Self {
        let la = n_alpha.saturating_sub(1) as f64;
        let lb = n_beta.saturating_sub(1) as f64;
        let wiggle = |l: f64, f: &dyn Fn(f64, f64) -> Vec<f64>| (0..=20).map(|i| f(l * i as f64 / 20.0, l)).collect();
        ScenarioConfig {
            seed,
            trajectory: TrajectorySpec::Waypoints {
                alpha: wiggle(la, &|s, _| vec![s, 4.0 * (s / 25.0).sin()]),
                beta: wiggle(lb, &|s, l| vec![la / 2.0 + 4.0 * (s / 30.0).sin(), s - l / 2.0]),
                step: 1.0,
            },
            odometry: OdometryNoise {
                translation_sigma: 0.02,
                rotation_sigma: 3e-4,
            },
            range_sigma: 0.5,
            aoa_sigma_deg: 10.0,
            comm: CommConfig {
                interval: 10.0,
                max_range: 30.0,
                alternate_receiver: true,
                max_measurements: None,
            },
            multipath: MultipathConfig::default(),
            link_prior: LinkPrior {
                z_sigma: 0.5,
                tilt_sigma: 0.005,
                heading_sigma: 0.01,
            },
            true_lc_radius: 10.0,
            sensor_range: 10.0,
            pipeline: PipelineConfig::default(),
            noise_free: false,
        }
    }

    /// Crossing paths with exact measurements and near-zero model stds.
    pub fn noise_free(seed: u64, n_alpha: usize, n_beta: usize) -> Self {
        let tiny = 2e-6;
        ScenarioConfig {
            odometry: OdometryNoise {
                translation_sigma: tiny,
                rotation_sigma: 1e-8,
            },
            range_sigma: tiny,
            aoa_sigma_deg: 1e-5,
            link_prior: LinkPrior {
                z_sigma: tiny,
                tilt_sigma: 1e-8,
                heading_sigma: 1e-8,
            },
            noise_free: true,
            ..Self::crossing(seed, n_alpha, n_beta)
        }
    }

    /// Two robots indoors: four measurements with five AOA modes each, one
    /// of them missing its direct path.
    pub fn hardware_analog(seed: u64) -> Self {
        let alpha = vec![vec![0.0, 0.0], vec![30.0, 0.0], vec![30.0, 10.0]];
        let beta = vec![vec![30.0, 16.0], vec![0.0, 16.0], vec![0.0, 6.0]];
        ScenarioConfig {
            seed,
            trajectory: TrajectorySpec::Waypoints { alpha, beta, step: 0.5 },
            odometry: OdometryNoise {
                translation_sigma: 0.01,
                rotation_sigma: 0.001,
            },
            range_sigma: 0.5,
            aoa_sigma_deg: 10.0,
            comm: CommConfig {
                interval: 10.0,
                max_range: 40.0,
                alternate_receiver: true,
                max_measurements: Some(4),
            },
            multipath: MultipathConfig {
                modes: 5,
                missing_direct: 1,
                min_offset_deg: 100.0,
                max_offset_deg: 180.0,
                allow_ambiguous: false,
            },
            link_prior: LinkPrior {
                z_sigma: 0.5,
                tilt_sigma: 0.01,
                heading_sigma: 0.03,
            },
            true_lc_radius: 10.0,
            sensor_range: 10.0,
            pipeline: PipelineConfig {
                gamma: Gamma::Chi2 { confidence: 0.999 },
                standard_gaussian: true,
                ..PipelineConfig::default()
            },
            noise_free: false,
        }
    }

    /// One long drive around a city loop, out and back in the opposite
    /// direction, split into two robots of about a thousand poses each.
    pub fn kitti_shaped(seed: u64) -> Self {
        let mut lap = vec![
            vec![0.0, 0.0],
            vec![600.0, 0.0],
            vec![600.0, 400.0],
            vec![300.0, 400.0],
            vec![300.0, 800.0],
            vec![-200.0, 800.0],
            vec![-200.0, 300.0],
            vec![0.0, 300.0],
            vec![0.0, 0.0],
        ];
        let back: Vec<_> = lap.iter().rev().skip(1).cloned().collect();
        lap.extend(back);
        ScenarioConfig {
            seed,
            trajectory: TrajectorySpec::Split {
                waypoints: lap,
                step: 3.0,
                parts: 2,
                alpha_part: 0,
                beta_part: 1,
            },
            odometry: OdometryNoise {
                translation_sigma: 0.03,
                rotation_sigma: 1e-4,
            },
            range_sigma: 0.5,
            aoa_sigma_deg: 10.0,
            comm: CommConfig {
                interval: 30.0,
                max_range: 40.0,
                alternate_receiver: true,
                max_measurements: None,
            },
            multipath: MultipathConfig::default(),
            link_prior: LinkPrior {
                z_sigma: 0.5,
                tilt_sigma: 0.001,
                heading_sigma: 0.002,
            },
            true_lc_radius: 35.0,
            sensor_range: 35.0,
            pipeline: PipelineConfig::default(),
            noise_free: false,
        }
    }
}

fn points(raw: &[Vec<f64>]) -> Result<Vec<Vector3<f64>>> {
    raw.iter()
        .map(|p| match p.as_slice() {
            [x, y] => Ok(Vector3::new(*x, *y, 0.0)),
            [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
            _ => Err(Error::Config(format!("waypoint {p:?} needs 2 or 3 coordinates"))),
        })
        .collect()
}

fn path_length(poses: &[Pose]) -> f64 {
    poses.windows(2).map(|w| (w[1].translation - w[0].translation).norm()).sum()
}

/// Poses every `step` meters along the polyline, yawed along the direction of travel.
pub fn resample(waypoints: &[Vector3<f64>], step: f64) -> Result<Vec<Pose>> {
    if waypoints.len() < 2 {
        return Err(Error::Config("a path needs at least two waypoints".into()));
    }
    let segs: Vec<(Vector3<f64>, Vector3<f64>, f64)> = waypoints
        .windows(2)
        .map(|w| (w[0], w[1] - w[0], (w[1] - w[0]).norm()))
        .filter(|s| s.2 > 0.0)
        .collect();
    if segs.is_empty() {
        return Err(Error::Config("path has zero length".into()));
    }
    let total: f64 = segs.iter().map(|s| s.2).sum();
    let n = (total / step + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let (mut si, mut start) = (0, 0.0);
    for i in 0..=n {
        let s = i as f64 * step;
        while si + 1 < segs.len() && s > start + segs[si].2 {
            start += segs[si].2;
            si += 1;
        }
        let (a, d, len) = segs[si];
        let t = ((s - start) / len).min(1.0);
        out.push(Pose::from_yaw(d.y.atan2(d.x), a + d * t));
    }
    Ok(out)
}

fn ground_truth(c: &ScenarioConfig) -> Result<(Vec<Pose>, Vec<Pose>)> {
    let tum_poses = |r: &[io::TumRecord]| r.iter().map(io::TumRecord::pose).collect::<Vec<_>>();
    match &c.trajectory {
        TrajectorySpec::Waypoints { alpha, beta, step } => {
            Ok((resample(&points(alpha)?, *step)?, resample(&points(beta)?, *step)?))
        }
        TrajectorySpec::Split {
            waypoints,
            step,
            parts,
            alpha_part,
            beta_part,
        } => {
            let all = resample(&points(waypoints)?, *step)?;
            let chunks = split_poses(&all, *parts)?;
            Ok((chunks[*alpha_part].clone(), chunks[*beta_part].clone()))
        }
        TrajectorySpec::Tum { alpha, beta } => Ok((tum_poses(&io::load_tum(alpha)?), tum_poses(&io::load_tum(beta)?))),
        TrajectorySpec::TumSplit {
            path,
            parts,
            alpha_part,
            beta_part,
        } => {
            let chunks = io::split(&io::load_tum(path)?, *parts)?;
            Ok((tum_poses(&chunks[*alpha_part]), tum_poses(&chunks[*beta_part])))
        }
    }
}

fn split_poses(poses: &[Pose], parts: usize) -> Result<Vec<Vec<Pose>>> {
    if parts == 0 || parts > poses.len() {
        return Err(Error::Config(format!("cannot split {} poses into {parts} segments", poses.len())));
    }
    let base = poses.len() / parts;
    let extra = poses.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push(poses[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).expect("positive std").sample(rng)
}

fn wrap(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn odometry(c: &ScenarioConfig, truth: &[Pose], rng: &mut ChaCha8Rng) -> Result<Vec<OdometryFactor>> {
    let noise = c.odometry_covariance();
    truth
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let step = w[0].between(&w[1]);
            let measured = if c.noise_free {
                step
            } else {
                let (r, t) = (c.odometry.rotation_sigma, c.odometry.translation_sigma);
                let d = Vector6::from_fn(|j, _| gaussian(rng, if j < 3 { r } else { t }));
                step.retract(&Twist(d))
            };
            OdometryFactor::new(i, i + 1, measured, noise)
        })
        .collect()
}

/// Candidate measurement events: `(receiver is α, α index, β index)`.
fn events(c: &ScenarioConfig, alpha: &[Pose], beta: &[Pose]) -> Vec<(bool, usize, usize)> {
    let (n, m) = (alpha.len(), beta.len());
    let mut out = Vec::new();
    let mut since = c.comm.interval;
    let mut receiver_alpha = true;
    for i in 0..n {
        if i > 0 {
            since += (alpha[i].translation - alpha[i - 1].translation).norm();
        }
        if since + 1e-9 < c.comm.interval {
            continue;
        }
        let k = if n > 1 { ((i * (m - 1)) as f64 / (n - 1) as f64).round() as usize } else { 0 };
        let d = (beta[k].translation - alpha[i].translation).norm();
        if d > c.comm.max_range || d < 1e-3 {
            continue;
        }
        since = 0.0;
        out.push((receiver_alpha, i, k));
        if c.comm.alternate_receiver {
            receiver_alpha = !receiver_alpha;
        }
        if c.comm.max_measurements.is_some_and(|mx| out.len() >= mx) {
            break;
        }
    }
    out
}

fn measurement(
    c: &ScenarioConfig,
    id: u32,
    receiver: (u32, usize, &Pose),
    transmitter: (u32, usize, &Pose),
    with_direct: bool,
    rng: &mut ChaCha8Rng,
) -> Result<CommMeasurement> {
    let rel = receiver.2.between(transmitter.2);
    let x = rel.translation;
    let d = x.norm();
    let bearing = x.y.atan2(x.x);
    let heading = rel.yaw();
    let sigma = c.aoa_sigma();
    let (range, direct, heading) = if c.noise_free {
        (d, bearing, heading)
    } else {
        (
            d + gaussian(rng, c.range_sigma),
            bearing + gaussian(rng, sigma),
            heading + gaussian(rng, c.link_prior.heading_sigma),
        )
    };
    let k = c.multipath.modes;
    let mut bearings = Vec::with_capacity(k);
    if with_direct {
        bearings.push((true, wrap(direct)));
    }
    let (lo, hi) = (c.multipath.min_offset_deg.to_radians(), c.multipath.max_offset_deg.to_radians());
    while bearings.len() < k {
        let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        bearings.push((false, wrap(direct + sign * mag)));
    }
    bearings.shuffle(rng);
    let prior = 1.0 / k as f64;
    let modes = bearings
        .iter()
        .map(|&(_, phi)| AoaMode::from_sigma(phi, sigma, prior))
        .collect::<Result<Vec<_>>>()?;
    let m = CommMeasurement {
        id,
        receiver: Endpoint {
            robot: receiver.0,
            index: receiver.1,
        },
        transmitter: Endpoint {
            robot: transmitter.0,
            index: transmitter.1,
        },
        range: GenericRange::with_convention(
            range.max(1e-6),
            c.range_sigma,
            crate::factors::ExponentConvention::from_standard_flag(c.pipeline.standard_gaussian),
        )?,
        modes,
        heading: Some(wrap(heading)),
        truth_direct_index: bearings.iter().position(|b| b.0),
    };
    m.validate()?;
    Ok(m)
}

/// Builds a scenario from `c`.
pub fn synthesize(c: &ScenarioConfig) -> Result<ScenarioData> {
    c.validate()?;
    let (alpha, beta) = ground_truth(c)?;
    for (name, t) in [("alpha", &alpha), ("beta", &beta)] {
        if path_length(t) < c.comm.interval {
            return Err(Error::Config(format!(
                "{name} path is shorter than the communication interval {}",
                c.comm.interval
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let alpha_odometry = odometry(c, &alpha, &mut rng)?;
    let beta_odometry = odometry(c, &beta, &mut rng)?;

    let ev = events(c, &alpha, &beta);
    if c.multipath.missing_direct > ev.len() {
        return Err(Error::Config(format!(
            "{} measurements cannot drop the direct path from {}",
            ev.len(),
            c.multipath.missing_direct
        )));
    }
    let missing = rand::seq::index::sample(&mut rng, ev.len(), c.multipath.missing_direct).into_vec();
    let measurements = ev
        .iter()
        .enumerate()
        .map(|(id, &(alpha_receives, i, k))| {
            let a = (ALPHA, i, &alpha[i]);
            let b = (BETA, k, &beta[k]);
            let (r, t) = if alpha_receives { (a, b) } else { (b, a) };
            measurement(c, id as u32, r, t, !missing.contains(&id), &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let truth = GroundTruth { alpha, beta };
    let mut true_pairs = truth.true_pairs(c.true_lc_radius);
    true_pairs.sort_unstable();
    Ok(ScenarioData {
        seed: c.seed,
        truth,
        alpha_odometry,
        beta_odometry,
        measurements,
        true_pairs,
    })
}
