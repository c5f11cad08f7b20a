//! Odometry chains, their maximum-likelihood solve, and the shared estimate
//! that places robot β's trajectory in robot α's frame through the
//! communication links.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{between_linearization, fisher_covariance, LinkPrior, Realization};
use crate::lie::{self, compound, invert, position_covariance, Frame};
use crate::{CommMeasurement, Covariance6, OdometryFactor, Pose};

/// One robot's trajectory: poses in its local frame and the odometry chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub robot: u32,
    pub poses: Vec<Pose>,
    /// `odometry[i]` links pose `i` to pose `i + 1`.
    pub odometry: Vec<OdometryFactor>,
    /// Per-pose marginal covariance with pose 0 as gauge; empty until solved.
    #[serde(default)]
    pub marginals: Vec<Covariance6>,
}

impl Trajectory {
    /// Builds the chain and initializes poses by dead reckoning.
    pub fn new(robot: u32, odometry: Vec<OdometryFactor>) -> Result<Self> {
        let mut poses = Vec::with_capacity(odometry.len() + 1);
        poses.push(Pose::identity());
        for f in &odometry {
            let last = poses[poses.len() - 1];
            poses.push(last.then(&f.measured));
        }
        Self::with_poses(robot, poses, odometry)
    }

    /// Uses `poses` as the initial estimate.
    pub fn with_poses(robot: u32, poses: Vec<Pose>, odometry: Vec<OdometryFactor>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::State(format!("robot {robot} has no poses")));
        }
        if poses.len() != odometry.len() + 1 {
            return Err(Error::State(format!(
                "robot {robot}: {} poses but {} odometry factors",
                poses.len(),
                odometry.len()
            )));
        }
        for (i, f) in odometry.iter().enumerate() {
            if f.from_index != i || f.to_index != i + 1 {
                return Err(Error::State(format!(
                    "robot {robot}: odometry factor {i} links {} -> {}, expected a chain",
                    f.from_index, f.to_index
                )));
            }
        }
        let mut t = Trajectory {
            robot,
            poses,
            odometry,
            marginals: Vec::new(),
        };
        t.annotate();
        Ok(t)
    }

    fn annotate(&mut self) {
        let robot = self.robot;
        for (index, p) in self.poses.iter_mut().enumerate() {
            p.frame_from = Frame::Robot(robot);
            p.frame_to = Frame::Body { robot, index };
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn is_solved(&self) -> bool {
        !self.marginals.is_empty() && self.marginals.len() == self.poses.len()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Cumulative distance traveled along the estimated poses.
    pub fn path_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.poses.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.poses.windows(2) {
            acc += (w[1].translation - w[0].translation).norm();
            out.push(acc);
        }
        out
    }

    /// Estimated step `T^i_{i+1}` with the odometry noise as its covariance.
    fn step(&self, i: usize) -> (Pose, Covariance6) {
        (self.poses[i].between(&self.poses[i + 1]), self.odometry[i].noise)
    }

    /// `T^i_j` and its covariance in the body frame of `j`, compounded along the chain.
    pub fn segment(&self, i: usize, j: usize) -> (Pose, Covariance6) {
        if i > j {
            let (p, c) = self.segment(j, i);
            return invert(&p, &c);
        }
        let mut acc = (Pose::identity(), Covariance6::zeros());
        for m in i..j {
            let (z, q) = self.step(m);
            acc = compound(&acc.0, &acc.1, &z, &q);
        }
        acc
    }

    /// `T^c_p` with its covariance in the body frame of `p`, for every `p`.
    pub fn sweep(&self, c: usize) -> Vec<(Pose, Covariance6)> {
        let n = self.len();
        let mut out = vec![(Pose::identity(), Covariance6::zeros()); n];
        for p in c + 1..n {
            let (z, q) = self.step(p - 1);
            out[p] = compound(&out[p - 1].0, &out[p - 1].1, &z, &q);
        }
        // T^p_c for p < c, in the body frame of c, then inverted
        let mut back = (Pose::identity(), Covariance6::zeros());
        for p in (0..c).rev() {
            let (z, q) = self.step(p);
            back = compound(&z, &q, &back.0, &back.1);
            out[p] = invert(&back.0, &back.1);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Bound on the gradient infinity norm.
    pub gradient_tolerance: f64,
    /// Bound on the Newton decrement `√(gᵀH⁻¹g)`, the remaining step measured
    /// in standard deviations. Stiff information keeps the raw gradient above
    /// its tolerance at the floating-point floor.
    #[serde(default = "default_decrement")]
    pub decrement_tolerance: f64,
    pub initial_lambda: f64,
}

fn default_decrement() -> f64 {
    1e-6
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iters: 100,
            gradient_tolerance: 1e-8,
            decrement_tolerance: default_decrement(),
            initial_lambda: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    /// Negative log-likelihood (up to a constant) after each accepted step, starting with the initial value.
    pub costs: Vec<f64>,
    pub gradient_norm: f64,
}

struct Linearized {
    r: Vector6<f64>,
    ji: Matrix6<f64>,
    jj: Matrix6<f64>,
    omega: Matrix6<f64>,
}

/// Residual `log(Z⁻¹ Tᵢ⁻¹ Tⱼ)` and its Jacobians for right perturbations of `Tᵢ`, `Tⱼ`.
fn linearize_between(ti: &Pose, tj: &Pose, z: &Pose, omega: &Matrix6<f64>) -> Result<Linearized> {
    let (r, ji, jj) = between_linearization(ti, tj, z)?;
    Ok(Linearized { r, ji, jj, omega: *omega })
}

fn cost_of(lins: &[Linearized]) -> f64 {
    lins.iter().map(|l| 0.5 * (l.r.transpose() * l.omega * l.r)[0]).sum()
}

fn invert6(m: &Matrix6<f64>) -> Option<Matrix6<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky().map(|c| c.inverse())
}

/// Block-tridiagonal system: `diag[i]` on the diagonal, `off[i]` coupling `i` and `i + 1`.
struct BlockTridiagonal {
    diag: Vec<Matrix6<f64>>,
    off: Vec<Matrix6<f64>>,
}

impl BlockTridiagonal {
    /// Forward elimination; returns the inverted Schur complements.
    fn factor(&self, lambda: f64) -> Option<Vec<Matrix6<f64>>> {
        let n = self.diag.len();
        let mut s_inv = Vec::with_capacity(n);
        let damp = |d: &Matrix6<f64>| d + Matrix6::from_diagonal(&d.diagonal()) * lambda;
        s_inv.push(invert6(&damp(&self.diag[0]))?);
        for i in 0..n - 1 {
            let l = self.off[i].transpose() * s_inv[i];
            let s = damp(&self.diag[i + 1]) - l * self.off[i];
            s_inv.push(invert6(&s)?);
        }
        Some(s_inv)
    }

    fn solve(&self, s_inv: &[Matrix6<f64>], rhs: &[Vector6<f64>]) -> Vec<Vector6<f64>> {
        let n = self.diag.len();
        let mut y = rhs.to_vec();
        for i in 0..n - 1 {
            let l = self.off[i].transpose() * s_inv[i];
            let yi = y[i];
            y[i + 1] -= l * yi;
        }
        let mut x = vec![Vector6::zeros(); n];
        x[n - 1] = s_inv[n - 1] * y[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = s_inv[i] * (y[i] - self.off[i] * x[i + 1]);
        }
        x
    }

    /// Diagonal blocks of the inverse.
    fn marginals(&self, s_inv: &[Matrix6<f64>]) -> Vec<Matrix6<f64>> {
        let n = self.diag.len();
        let mut out = vec![Matrix6::zeros(); n];
        out[n - 1] = s_inv[n - 1];
        for i in (0..n - 1).rev() {
            let g = s_inv[i] * self.off[i];
            out[i] = s_inv[i] + g * out[i + 1] * g.transpose();
        }
        out
    }
}

fn chain_linearize(t: &Trajectory, poses: &[Pose], omegas: &[Matrix6<f64>]) -> Result<Vec<Linearized>> {
    t.odometry
        .iter()
        .zip(omegas)
        .enumerate()
        .map(|(m, (f, om))| linearize_between(&poses[m], &poses[m + 1], &f.measured, om))
        .collect()
}

fn chain_system(lins: &[Linearized], n_vars: usize) -> (BlockTridiagonal, Vec<Vector6<f64>>) {
    let mut diag = vec![Matrix6::zeros(); n_vars];
    let mut off = vec![Matrix6::zeros(); n_vars.saturating_sub(1)];
    let mut g = vec![Vector6::zeros(); n_vars];
    for (m, l) in lins.iter().enumerate() {
        // pose m+1 is variable m; pose 0 is the fixed gauge
        let wj = l.jj.transpose() * l.omega;
        diag[m] += wj * l.jj;
        g[m] += wj * l.r;
        if m >= 1 {
            let wi = l.ji.transpose() * l.omega;
            diag[m - 1] += wi * l.ji;
            g[m - 1] += wi * l.r;
            off[m - 1] += wi * l.jj;
        }
    }
    (BlockTridiagonal { diag, off }, g)
}

fn retract_all(poses: &[Pose], delta: &[Vector6<f64>], offset: usize) -> Vec<Pose> {
    let mut out = poses.to_vec();
    for (v, d) in delta.iter().enumerate() {
        out[v + offset] = poses[v + offset].retract(&lie::Twist(*d));
    }
    out
}

fn inf_norm(g: &[Vector6<f64>]) -> f64 {
    g.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

/// Damped Gauss-Newton on one robot's odometry chain with pose 0 held fixed.
///
/// On success the poses hold the estimate and `marginals` the diagonal blocks
/// of the inverse information (zero for pose 0).
pub fn solve_mle(t: &mut Trajectory, params: &SolverParams) -> Result<SolveSummary> {
    let n = t.len();
    if n < 2 {
        return Err(Error::State(format!("robot {}: need at least two poses to solve", t.robot)));
    }
    let omegas = t
        .odometry
        .iter()
        .map(|f| f.information())
        .collect::<Result<Vec<_>>>()?;
    let mut poses = t.poses.clone();
    let mut lins = chain_linearize(t, &poses, &omegas)?;
    let mut cost = cost_of(&lins);
    let mut summary = SolveSummary {
        costs: vec![cost],
        ..Default::default()
    };
    let mut lambda = params.initial_lambda;
    for iter in 0..=params.max_iters {
        let (sys, g) = chain_system(&lins, n - 1);
        let s_inv = sys.factor(0.0).ok_or(Error::RankDeficient)?;
        let neg_g: Vec<_> = g.iter().map(|v| -v).collect();
        let gn = sys.solve(&s_inv, &neg_g);
        let decrement = g.iter().zip(&gn).map(|(a, b)| -a.dot(b)).sum::<f64>().max(0.0).sqrt();
        let gnorm = inf_norm(&g);
        summary.gradient_norm = gnorm;
        summary.iterations = iter;
        if gnorm < params.gradient_tolerance || decrement < params.decrement_tolerance {
            let marg = sys.marginals(&s_inv);
            t.poses = poses;
            t.annotate();
            t.marginals = std::iter::once(Covariance6::zeros())
                .chain(marg.into_iter().map(Covariance6::from_matrix_unchecked))
                .collect();
            return Ok(summary);
        }
        if iter == params.max_iters {
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let Some(damped) = sys.factor(lambda) else {
                lambda *= 10.0;
                continue;
            };
            let delta = sys.solve(&damped, &neg_g);
            let trial = retract_all(&poses, &delta, 1);
            let trial_lins = chain_linearize(t, &trial, &omegas)?;
            let trial_cost = cost_of(&trial_lins);
            if trial_cost < cost {
                poses = trial;
                lins = trial_lins;
                cost = trial_cost;
                summary.costs.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: summary.iterations,
        gradient_norm: summary.gradient_norm,
    })
}

/// Relative-pose constraint between two variables of a [`PoseGraph`].
#[derive(Clone, Debug)]
pub struct BetweenFactor {
    pub from: usize,
    pub to: usize,
    pub measured: Pose,
    pub information: Matrix6<f64>,
}

/// General pose graph solved with dense linear algebra. Intended for small
/// validation problems; per-robot chains go through [`solve_mle`].
#[derive(Clone, Debug)]
pub struct PoseGraph {
    pub poses: Vec<Pose>,
    pub factors: Vec<BetweenFactor>,
    /// Variable held fixed as the gauge.
    pub gauge: usize,
}

impl PoseGraph {
    fn linearize(&self, poses: &[Pose]) -> Result<Vec<Linearized>> {
        self.factors
            .iter()
            .map(|f| linearize_between(&poses[f.from], &poses[f.to], &f.measured, &f.information))
            .collect()
    }

    fn var(&self, pose: usize) -> Option<usize> {
        match pose.cmp(&self.gauge) {
            std::cmp::Ordering::Less => Some(pose),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(pose - 1),
        }
    }

    fn system(&self, lins: &[Linearized]) -> (DMatrix<f64>, DVector<f64>) {
        let dim = 6 * (self.poses.len() - 1);
        let mut h = DMatrix::zeros(dim, dim);
        let mut g = DVector::zeros(dim);
        for (f, l) in self.factors.iter().zip(lins) {
            let blocks = [(self.var(f.from), l.ji), (self.var(f.to), l.jj)];
            for (va, ja) in &blocks {
                let Some(a) = va else { continue };
                let wa = ja.transpose() * l.omega;
                let mut ga = g.fixed_rows_mut::<6>(6 * a);
                ga += wa * l.r;
                for (vb, jb) in &blocks {
                    let Some(b) = vb else { continue };
                    let mut hab = h.fixed_view_mut::<6, 6>(6 * a, 6 * b);
                    hab += wa * jb;
                }
            }
        }
        (h, g)
    }

    fn apply(&self, poses: &[Pose], delta: &DVector<f64>) -> Vec<Pose> {
        let mut out = poses.to_vec();
        for (i, p) in out.iter_mut().enumerate() {
            if let Some(v) = self.var(i) {
                let d = Vector6::from_iterator(delta.rows(6 * v, 6).iter().copied());
                *p = poses[i].retract(&lie::Twist(d));
            }
        }
        out
    }

    pub fn optimize(&mut self, params: &SolverParams) -> Result<SolveSummary> {
        if self.poses.len() < 2 {
            return Err(Error::State("pose graph needs at least two poses".into()));
        }
        let mut lins = self.linearize(&self.poses)?;
        let mut cost = cost_of(&lins);
        let mut summary = SolveSummary {
            costs: vec![cost],
            ..Default::default()
        };
        let mut lambda = params.initial_lambda;
        for iter in 0..=params.max_iters {
            let (h, g) = self.system(&lins);
            let chol = h.clone().cholesky().ok_or(Error::RankDeficient)?;
            let gn = chol.solve(&(-&g));
            let decrement = (-g.dot(&gn)).max(0.0).sqrt();
            summary.gradient_norm = g.amax();
            summary.iterations = iter;
            if summary.gradient_norm < params.gradient_tolerance || decrement < params.decrement_tolerance {
                return Ok(summary);
            }
            if iter == params.max_iters {
                break;
            }
            let mut accepted = false;
            while lambda < 1e16 {
                let mut damped = h.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] *= 1.0 + lambda;
                }
                let Some(c) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let trial = self.apply(&self.poses, &c.solve(&(-&g)));
                let trial_lins = self.linearize(&trial)?;
                let trial_cost = cost_of(&trial_lins);
                if trial_cost < cost {
                    self.poses = trial;
                    lins = trial_lins;
                    cost = trial_cost;
                    summary.costs.push(cost);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NoConvergence {
            iterations: summary.iterations,
            gradient_norm: summary.gradient_norm,
        })
    }

    /// Marginal covariance of every pose (zero for the gauge) at the current estimate.
    pub fn marginals(&self) -> Result<Vec<Covariance6>> {
        let (h, _) = self.system(&self.linearize(&self.poses)?);
        let inv = h.cholesky().ok_or(Error::RankDeficient)?.inverse();
        Ok((0..self.poses.len())
            .map(|i| match self.var(i) {
                None => Covariance6::zeros(),
                Some(v) => Covariance6::from_matrix_unchecked(inv.fixed_view::<6, 6>(6 * v, 6 * v).into_owned()),
            })
            .collect())
    }
}

/// One AOA mode of a measurement lifted to a transform from α's endpoint to β's.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementHypothesis {
    pub measurement: u32,
    pub mode: usize,
    /// Endpoint on α (`c1`).
    pub alpha_index: usize,
    /// Endpoint on β (`c2`).
    pub beta_index: usize,
    pub range: f64,
    pub prior: f64,
    /// `T^{c1}_{c2}`.
    pub transform: Pose,
    /// Covariance of `transform`, body frame of `c2`.
    pub covariance: Covariance6,
}

impl MeasurementHypothesis {
    pub fn new(m: &CommMeasurement, mode: usize, alpha: u32, beta: u32, prior: &LinkPrior) -> Result<Self> {
        let (pose, cov) = m.lift(mode, prior)?;
        let (r, t) = (m.receiver, m.transmitter);
        let (transform, covariance, alpha_index, beta_index) = if r.robot == alpha && t.robot == beta {
            (pose, cov, r.index, t.index)
        } else if r.robot == beta && t.robot == alpha {
            let (p, c) = invert(&pose, &cov);
            (p, c, t.index, r.index)
        } else {
            return Err(Error::Association(format!(
                "measurement {} links robots {} and {}, not {alpha} and {beta}",
                m.id, r.robot, t.robot
            )));
        };
        Ok(MeasurementHypothesis {
            measurement: m.id,
            mode,
            alpha_index,
            beta_index,
            range: m.range.d,
            prior: m.modes[mode].prior,
            transform: transform.with_frames(
                Frame::Body { robot: alpha, index: alpha_index },
                Frame::Body { robot: beta, index: beta_index },
            ),
            covariance,
        })
    }

    /// `T^α_β` implied by this link and the two trajectory estimates.
    pub fn placement(&self, ta: &Trajectory, tb: &Trajectory) -> Pose {
        ta.poses[self.alpha_index]
            .then(&self.transform)
            .then(&tb.poses[self.beta_index].inverse())
    }
}

/// Every mode of every measurement between `ta` and `tb`, ordered by (measurement, mode).
pub fn hypotheses(
    measurements: &[CommMeasurement],
    ta: &Trajectory,
    tb: &Trajectory,
    prior: &LinkPrior,
) -> Result<Vec<MeasurementHypothesis>> {
    let mut out = Vec::new();
    for m in measurements {
        let robots = [m.receiver.robot, m.transmitter.robot];
        if !robots.contains(&ta.robot) || !robots.contains(&tb.robot) {
            continue;
        }
        check_endpoints(m, ta, tb)?;
        for mode in 0..m.modes.len() {
            out.push(MeasurementHypothesis::new(m, mode, ta.robot, tb.robot, prior)?);
        }
    }
    out.sort_by_key(|h| (h.measurement, h.mode));
    Ok(out)
}

fn check_endpoints(m: &CommMeasurement, ta: &Trajectory, tb: &Trajectory) -> Result<()> {
    for e in [m.receiver, m.transmitter] {
        let len = if e.robot == ta.robot { ta.len() } else { tb.len() };
        if e.index >= len {
            return Err(Error::Association(format!(
                "measurement {} references pose {} of robot {} ({len} poses)",
                m.id, e.index, e.robot
            )));
        }
    }
    Ok(())
}

/// β's trajectory placed in α's frame through the selected links.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharedEstimate {
    pub alpha: u32,
    pub beta: u32,
    pub anchor: MeasurementHypothesis,
    /// `T^α_β`.
    pub relative: Pose,
    /// `Σ_αβ`: covariance of the anchor link.
    pub covariance: Covariance6,
    /// Every link of the realization, ordered by measurement id; contains the anchor.
    pub links: Vec<MeasurementHypothesis>,
}

/// Places β relative to α with a single link.
pub fn anchor_shared(
    ta: &Trajectory,
    tb: &Trajectory,
    m: &CommMeasurement,
    mode_index: usize,
    prior: &LinkPrior,
) -> Result<SharedEstimate> {
    check_endpoints(m, ta, tb)?;
    let h = MeasurementHypothesis::new(m, mode_index, ta.robot, tb.robot, prior)?;
    Ok(shared_from_links(ta, tb, vec![h.clone()], h))
}

fn shared_from_links(
    ta: &Trajectory,
    tb: &Trajectory,
    links: Vec<MeasurementHypothesis>,
    anchor: MeasurementHypothesis,
) -> SharedEstimate {
    SharedEstimate {
        alpha: ta.robot,
        beta: tb.robot,
        relative: anchor
            .placement(ta, tb)
            .with_frames(Frame::Robot(ta.robot), Frame::Robot(tb.robot)),
        covariance: anchor.covariance,
        anchor,
        links,
    }
}

/// Shared estimate over every link in `realization`; the anchor is the link
/// with the smallest translational covariance trace.
pub fn shared_from_realization(
    ta: &Trajectory,
    tb: &Trajectory,
    measurements: &[CommMeasurement],
    realization: &Realization,
    prior: &LinkPrior,
) -> Result<SharedEstimate> {
    let mut links = Vec::new();
    for m in measurements {
        if let Some(&mode) = realization.get(&m.id) {
            check_endpoints(m, ta, tb)?;
            links.push(MeasurementHypothesis::new(m, mode, ta.robot, tb.robot, prior)?);
        }
    }
    if links.is_empty() {
        return Err(Error::NoLink);
    }
    links.sort_by_key(|h| h.measurement);
    let anchor = links
        .iter()
        .min_by(|a, b| {
            let ta = a.covariance.translational().trace();
            let tb = b.covariance.translational().trace();
            ta.total_cmp(&tb).then(a.measurement.cmp(&b.measurement))
        })
        .cloned()
        .expect("non-empty");
    Ok(shared_from_links(ta, tb, links, anchor))
}

/// Index into `links` of the link minimizing the odometry-plus-range route
/// from `p` on α to `k` on β. Ties go to the lower measurement id.
pub fn min_route(
    links: &[MeasurementHypothesis],
    alpha_lengths: &[f64],
    beta_lengths: &[f64],
    p: usize,
    k: usize,
) -> Result<usize> {
    let mut best: Option<(f64, u32, usize)> = None;
    for (i, l) in links.iter().enumerate() {
        let len = (alpha_lengths[p] - alpha_lengths[l.alpha_index]).abs()
            + l.range
            + (beta_lengths[l.beta_index] - beta_lengths[k]).abs();
        let better = match best {
            None => true,
            Some((bl, bid, _)) => len < bl || (len == bl && l.measurement < bid),
        };
        if better {
            best = Some((len, l.measurement, i));
        }
    }
    best.map(|b| b.2).ok_or(Error::NoLink)
}

/// Relative pose and uncertainty of one α/β pose pair.
#[derive(Clone, Debug)]
pub struct RelativeEstimate {
    /// Measurement id of the routing link.
    pub link: u32,
    /// `T^p_k`.
    pub pose: Pose,
    /// Covariance of `pose`, body frame of `k`.
    pub covariance: Covariance6,
    /// `x_k - x_p` expressed in the frame of the link's α endpoint.
    pub separation: Vector3<f64>,
    /// Covariance of `separation`.
    pub separation_covariance: Matrix3<f64>,
}

/// Computes [`RelativeEstimate`] for one pair by compounding the chain directly.
pub fn relative_pose_covariance(
    ta: &Trajectory,
    tb: &Trajectory,
    shared: &SharedEstimate,
    p: usize,
    k: usize,
) -> Result<RelativeEstimate> {
    if p >= ta.len() || k >= tb.len() {
        return Err(Error::Association(format!("pair ({p}, {k}) outside trajectories")));
    }
    let li = min_route(&shared.links, &ta.path_lengths(), &tb.path_lengths(), p, k)?;
    let l = &shared.links[li];
    let (a, sa) = ta.segment(l.alpha_index, p);
    let (b, sb) = tb.segment(l.beta_index, k);
    Ok(combine(l, &a, &sa, &b, &sb))
}

/// `a = T^{c1}_p`, `b = T^{c2}_k`, each with covariance in its end body frame.
fn combine(l: &MeasurementHypothesis, a: &Pose, sa: &Covariance6, b: &Pose, sb: &Covariance6) -> RelativeEstimate {
    let (ck, sck) = compound(&l.transform, &l.covariance, b, sb);
    let (pc, spc) = invert(a, sa);
    let (pose, covariance) = compound(&pc, &spc, &ck, &sck);
    RelativeEstimate {
        link: l.measurement,
        pose,
        covariance,
        separation: ck.translation - a.translation,
        separation_covariance: position_covariance(&ck, &sck) + position_covariance(a, sa),
    }
}

/// Pose of one trajectory vertex relative to a link endpoint.
#[derive(Clone, Debug)]
struct SideEntry {
    pose: Pose,
    covariance: Covariance6,
    position_covariance: Matrix3<f64>,
}

#[derive(Clone, Debug)]
struct LinkTable {
    /// `T^{c1}_p` for every α pose.
    alpha: Vec<SideEntry>,
    /// `T^{c1}_k = T^{c1}_{c2} T^{c2}_k` for every β pose.
    beta: Vec<SideEntry>,
    /// Covariance of `x^{c2}_k` (β odometry only).
    beta_local: Vec<Matrix3<f64>>,
    /// `‖x^{c2}_k‖`.
    beta_lever: Vec<f64>,
}

/// Per-link tables giving every pair's routed relative estimate in O(links).
#[derive(Clone, Debug)]
pub struct RouteTables {
    pub links: Vec<MeasurementHypothesis>,
    pub alpha_lengths: Vec<f64>,
    pub beta_lengths: Vec<f64>,
    alpha_poses: Vec<Pose>,
    tables: Vec<LinkTable>,
}

impl RouteTables {
    pub fn new(ta: &Trajectory, tb: &Trajectory, shared: &SharedEstimate) -> Result<Self> {
        if shared.links.is_empty() {
            return Err(Error::NoLink);
        }
        for l in &shared.links {
            if l.alpha_index >= ta.len() || l.beta_index >= tb.len() {
                return Err(Error::Association(format!("link {} outside trajectories", l.measurement)));
            }
        }
        let tables = shared
            .links
            .par_iter()
            .map(|l| {
                let alpha = ta
                    .sweep(l.alpha_index)
                    .into_iter()
                    .map(|(pose, covariance)| SideEntry {
                        position_covariance: position_covariance(&pose, &covariance),
                        pose,
                        covariance,
                    })
                    .collect();
                let local = tb.sweep(l.beta_index);
                let beta_local = local.iter().map(|(p, c)| position_covariance(p, c)).collect();
                let beta_lever = local.iter().map(|(p, _)| p.translation.norm()).collect();
                let beta = local
                    .iter()
                    .map(|(p, c)| {
                        let (pose, covariance) = compound(&l.transform, &l.covariance, p, c);
                        SideEntry {
                            position_covariance: position_covariance(&pose, &covariance),
                            pose,
                            covariance,
                        }
                    })
                    .collect();
                LinkTable {
                    alpha,
                    beta,
                    beta_local,
                    beta_lever,
                }
            })
            .collect();
        Ok(RouteTables {
            links: shared.links.clone(),
            alpha_lengths: ta.path_lengths(),
            beta_lengths: tb.path_lengths(),
            alpha_poses: ta.poses.clone(),
            tables,
        })
    }

    pub fn alpha_len(&self) -> usize {
        self.alpha_lengths.len()
    }

    pub fn beta_len(&self) -> usize {
        self.beta_lengths.len()
    }

    /// Index of the routing link for `(p, k)`.
    pub fn route(&self, p: usize, k: usize) -> usize {
        min_route(&self.links, &self.alpha_lengths, &self.beta_lengths, p, k).expect("tables hold at least one link")
    }

    /// Routing link, separation vector and its covariance for `(p, k)`.
    pub fn separation(&self, p: usize, k: usize) -> (usize, Vector3<f64>, Matrix3<f64>) {
        let li = self.route(p, k);
        let t = &self.tables[li];
        let (a, b) = (&t.alpha[p], &t.beta[k]);
        (
            li,
            b.pose.translation - a.pose.translation,
            a.position_covariance + b.position_covariance,
        )
    }

    pub fn relative(&self, p: usize, k: usize) -> RelativeEstimate {
        let li = self.route(p, k);
        let t = &self.tables[li];
        let l = &self.links[li];
        let (a, b) = (&t.alpha[p], &t.beta[k]);
        let (pc, spc) = invert(&a.pose, &a.covariance);
        let (pose, covariance) = compound(&pc, &spc, &b.pose, &b.covariance);
        RelativeEstimate {
            link: l.measurement,
            pose,
            covariance,
            separation: b.pose.translation - a.pose.translation,
            separation_covariance: a.position_covariance + b.position_covariance,
        }
    }

    /// Positions of β's poses in α's frame as placed through link `li`.
    pub fn beta_in_alpha(&self, li: usize) -> Vec<Vector3<f64>> {
        let c1 = &self.alpha_poses[self.links[li].alpha_index];
        self.tables[li].beta.iter().map(|e| c1.transform_point(&e.pose.translation)).collect()
    }

    /// Covariances of every α pose position relative to link `li`'s α endpoint.
    pub fn alpha_position_covariances(&self, li: usize) -> impl Iterator<Item = &Matrix3<f64>> {
        self.tables[li].alpha.iter().map(|e| &e.position_covariance)
    }

    /// Covariances of every β pose position relative to link `li`'s β endpoint.
    pub fn beta_position_covariances(&self, li: usize) -> &[Matrix3<f64>] {
        &self.tables[li].beta_local
    }

    /// Largest distance from link `li`'s β endpoint to any β pose.
    pub fn beta_lever(&self, li: usize) -> f64 {
        self.tables[li].beta_lever.iter().copied().fold(0.0, f64::max)
    }
}

/// Result of the joint multi-link solve.
#[derive(Clone, Debug)]
pub struct JointEstimate {
    pub alpha: Vec<Pose>,
    /// β's poses in α's frame.
    pub beta: Vec<Pose>,
    /// `T^α_β`.
    pub relative: Pose,
    pub summary: SolveSummary,
}

/// Joint maximum-likelihood solve over both chains and every link, with α's
/// pose 0 as gauge. Dense; meant for validating the single-link anchoring on
/// small problems.
pub fn joint_solve(
    ta: &Trajectory,
    tb: &Trajectory,
    shared: &SharedEstimate,
    params: &SolverParams,
) -> Result<JointEstimate> {
    let na = ta.len();
    let mut poses = ta.poses.clone();
    poses.extend(tb.poses.iter().map(|p| shared.relative.then(p)));
    let mut factors = Vec::new();
    for (t, offset) in [(ta, 0), (tb, na)] {
        for f in &t.odometry {
            factors.push(BetweenFactor {
                from: f.from_index + offset,
                to: f.to_index + offset,
                measured: f.measured,
                information: f.information()?,
            });
        }
    }
    for l in &shared.links {
        factors.push(BetweenFactor {
            from: l.alpha_index,
            to: na + l.beta_index,
            measured: l.transform,
            information: fisher_covariance(l.covariance.matrix())?,
        });
    }
    let mut graph = PoseGraph { poses, factors, gauge: 0 };
    let summary = graph.optimize(params)?;
    let beta = graph.poses.split_off(na);
    let relative = beta[0];
    Ok(JointEstimate {
        alpha: graph.poses,
        beta,
        relative,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::{AoaMode, Endpoint};
    use crate::RangeFactor;
    use approx::assert_relative_eq;

    fn step(yaw: f64, x: f64) -> Pose {
        Pose::from_yaw(yaw, Vector3::new(x, 0.0, 0.0))
    }

    fn chain(robot: u32, n: usize) -> Trajectory {
        let noise = Covariance6::isotropic(0.01, 0.05);
        let odo = (0..n - 1)
            .map(|i| OdometryFactor::new(i, i + 1, step(0.1, 1.0), noise).unwrap())
            .collect();
        Trajectory::new(robot, odo).unwrap()
    }

    fn measurement(receiver: Endpoint, transmitter: Endpoint, d: f64, phi: f64) -> CommMeasurement {
        CommMeasurement {
            id: 0,
            receiver,
            transmitter,
            range: RangeFactor::new(d, 0.5).unwrap(),
            modes: vec![AoaMode::from_sigma(phi, 10f64.to_radians(), 1.0).unwrap()],
            heading: Some(0.0),
            truth_direct_index: None,
        }
    }

    #[test]
    fn noise_free_chain_is_a_fixed_point() {
        let mut t = chain(0, 12);
        let before = t.poses.clone();
        let s = solve_mle(&mut t, &SolverParams::default()).unwrap();
        assert_eq!(s.iterations, 0);
        for (a, b) in before.iter().zip(&t.poses) {
            assert_eq!(a.translation, b.translation);
        }
        assert!(t.is_solved());
        assert_eq!(*t.marginals[0].matrix(), Matrix6::zeros());
    }

    #[test]
    fn recovers_single_factor_from_perturbed_start() {
        let z = Pose::from_yaw(0.4, Vector3::new(1.0, -2.0, 0.3));
        let f = OdometryFactor::new(0, 1, z, Covariance6::isotropic(0.01, 0.05)).unwrap();
        let start = z.retract(&lie::Twist(Vector6::new(0.2, -0.1, 0.05, 0.5, 0.3, -0.2)));
        let mut t = Trajectory::with_poses(0, vec![Pose::identity(), start], vec![f]).unwrap();
        solve_mle(&mut t, &SolverParams::default()).unwrap();
        let (dr, dt) = t.poses[1].distance_to(&z);
        assert!(dr < 1e-8 && dt < 1e-8, "{dr} {dt}");
    }

    #[test]
    fn chain_marginals_match_segments() {
        let mut t = chain(0, 8);
        solve_mle(&mut t, &SolverParams::default()).unwrap();
        for p in 0..8 {
            let (_, c) = t.segment(0, p);
            assert_relative_eq!(*t.marginals[p].matrix(), *c.matrix(), max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_matches_segment() {
        let t = chain(0, 9);
        let sw = t.sweep(4);
        for (p, s) in sw.iter().enumerate() {
            let (pose, c) = t.segment(4, p);
            assert_relative_eq!(s.0.translation, pose.translation, epsilon = 1e-12);
            assert_relative_eq!(*s.1.matrix(), *c.matrix(), epsilon = 1e-12);
        }
    }

    #[test]
    fn anchor_places_transmitter() {
        let ta = chain(0, 3);
        let tb = chain(1, 3);
        let r = Endpoint { robot: 0, index: 0 };
        let x = Endpoint { robot: 1, index: 0 };
        let s = anchor_shared(&ta, &tb, &measurement(r, x, 5.0, 0.0), 0, &LinkPrior::default()).unwrap();
        assert_relative_eq!(s.relative.translation, Vector3::new(5.0, 0.0, 0.0), epsilon = 1e-12);
        let s = anchor_shared(
            &ta,
            &tb,
            &measurement(r, x, 5.0, std::f64::consts::FRAC_PI_2),
            0,
            &LinkPrior::default(),
        )
        .unwrap();
        assert_relative_eq!(s.relative.translation, Vector3::new(0.0, 5.0, 0.0), epsilon = 1e-12);
        let mut m = measurement(r, x, 0.0, 0.0);
        m.range.d = 0.0;
        assert!(matches!(
            anchor_shared(&ta, &tb, &m, 0, &LinkPrior::default()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn anchor_with_receiver_on_beta() {
        let ta = chain(0, 3);
        let tb = chain(1, 3);
        let m = measurement(Endpoint { robot: 1, index: 0 }, Endpoint { robot: 0, index: 0 }, 5.0, 0.0);
        let s = anchor_shared(&ta, &tb, &m, 0, &LinkPrior::default()).unwrap();
        assert_relative_eq!(s.relative.translation, Vector3::new(-5.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn relative_at_link_endpoints_is_the_link() {
        let ta = chain(0, 6);
        let tb = chain(1, 6);
        let m = measurement(Endpoint { robot: 0, index: 2 }, Endpoint { robot: 1, index: 3 }, 5.0, 0.3);
        let s = anchor_shared(&ta, &tb, &m, 0, &LinkPrior::default()).unwrap();
        let r = relative_pose_covariance(&ta, &tb, &s, 2, 3).unwrap();
        assert_relative_eq!(r.pose.translation, s.anchor.transform.translation, epsilon = 1e-12);
        assert_relative_eq!(*r.covariance.matrix(), *s.covariance.matrix(), epsilon = 1e-12);
        let tables = RouteTables::new(&ta, &tb, &s).unwrap();
        for p in 0..6 {
            for k in 0..6 {
                let a = relative_pose_covariance(&ta, &tb, &s, p, k).unwrap();
                let b = tables.relative(p, k);
                assert_relative_eq!(a.pose.translation, b.pose.translation, epsilon = 1e-10);
                assert_relative_eq!(*a.covariance.matrix(), *b.covariance.matrix(), epsilon = 1e-10);
                assert_relative_eq!(a.separation, b.separation, epsilon = 1e-10);
                assert_relative_eq!(a.separation.norm(), a.pose.translation.norm(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn min_route_prefers_adjacent_link() {
        let lens: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mk = |id: u32, a: usize, b: usize| MeasurementHypothesis {
            measurement: id,
            mode: 0,
            alpha_index: a,
            beta_index: b,
            range: 3.0,
            prior: 1.0,
            transform: Pose::identity(),
            covariance: Covariance6::zeros(),
        };
        let links = vec![mk(0, 0, 0), mk(1, 8, 9)];
        assert_eq!(min_route(&links[..1], &lens, &lens, 8, 9).unwrap(), 0);
        assert_eq!(min_route(&links, &lens, &lens, 8, 9).unwrap(), 1);
        assert!(matches!(min_route(&[], &lens, &lens, 0, 0), Err(Error::NoLink)));
    }

    #[test]
    fn dense_graph_agrees_with_chain_solver() {
        let mut t = chain(0, 6);
        let truth = t.poses.clone();
        for (i, p) in t.poses.iter_mut().enumerate().skip(1) {
            *p = p.retract(&lie::Twist(Vector6::repeat(0.02 * i as f64)));
        }
        let mut g = PoseGraph {
            poses: t.poses.clone(),
            factors: t
                .odometry
                .iter()
                .map(|f| BetweenFactor {
                    from: f.from_index,
                    to: f.to_index,
                    measured: f.measured,
                    information: f.information().unwrap(),
                })
                .collect(),
            gauge: 0,
        };
        g.optimize(&SolverParams::default()).unwrap();
        solve_mle(&mut t, &SolverParams::default()).unwrap();
        let dense = g.marginals().unwrap();
        for i in 0..6 {
            assert_relative_eq!(g.poses[i].translation, truth[i].translation, epsilon = 1e-9);
            assert_relative_eq!(t.poses[i].translation, truth[i].translation, epsilon = 1e-9);
            assert_relative_eq!(*dense[i].matrix(), *t.marginals[i].matrix(), max_relative = 1e-6, epsilon = 1e-12);
        }
        assert!(t.odometry.len() == 5);
    }

    #[test]
    fn rejects_broken_chain() {
        let noise = Covariance6::isotropic(0.01, 0.05);
        let f = OdometryFactor::new(0, 2, step(0.0, 1.0), noise).unwrap();
        assert!(Trajectory::new(0, vec![f]).is_err());
        let mut t = Trajectory::with_poses(0, vec![Pose::identity()], vec![]).unwrap();
        assert!(solve_mle(&mut t, &SolverParams::default()).is_err());
    }
}
