//! Odometry and communication factors.
//!
//! The range factor keeps the exponent `-(d - ‖x‖)² / σ²` (no factor ½) by
//! default; [`ExponentConvention::StandardGaussian`] switches to the usual
//! `-(d - ‖x‖)² / (2σ²)`. The unscaled form doubles the Fisher information, so
//! the range variance it reports is `σ²/2`.
//!
//! The angle-of-arrival factor is a von Mises density over the azimuth of the
//! transmitter in the receiver's body frame. It peaks when that azimuth equals
//! the measured angle, `log f = log c₂ + κ cos(b - φ)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{log_map, right_jacobian_inverse, Covariance6, Pose};
use crate::scalar::Scalar;

/// Smallest accepted von Mises concentration.
pub const KAPPA_FLOOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentConvention {
    /// `exp(-r²/σ²)`.
    #[default]
    Unscaled,
    /// `exp(-r²/(2σ²))`.
    StandardGaussian,
}

impl ExponentConvention {
    /// Multiplier `w` in `exp(-w · r²/σ²)`.
    fn weight<T: Scalar>(self) -> T {
        match self {
            ExponentConvention::Unscaled => T::one(),
            ExponentConvention::StandardGaussian => T::lit(0.5),
        }
    }

    pub fn from_standard_flag(standard_gaussian: bool) -> Self {
        if standard_gaussian {
            ExponentConvention::StandardGaussian
        } else {
            ExponentConvention::Unscaled
        }
    }
}

/// A trajectory vertex: robot id and pose index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub robot: u32,
    pub index: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct OdometryFactor<T: Scalar> {
    pub from_index: usize,
    pub to_index: usize,
    pub measured: Pose<T>,
    pub noise: Covariance6<T>,
}

impl<T: Scalar> OdometryFactor<T> {
    pub fn new(from_index: usize, to_index: usize, measured: Pose<T>, noise: Covariance6<T>) -> Result<Self> {
        if from_index >= to_index {
            return Err(Error::InvalidFactor(format!(
                "odometry indices must be ordered, got {from_index} -> {to_index}"
            )));
        }
        let noise = Covariance6::new(*noise.matrix())?;
        Ok(OdometryFactor {
            from_index,
            to_index,
            measured,
            noise,
        })
    }

    /// `log(Z⁻¹ · Tᵢ⁻¹ · Tⱼ)`.
    pub fn residual(&self, from: &Pose<T>, to: &Pose<T>) -> Result<SMatrix<T, 6, 1>> {
        let err = self.measured.inverse().then(&from.between(to));
        Ok(log_map(&err)?.0)
    }

    pub fn information(&self) -> Result<Matrix6<T>> {
        fisher_covariance(self.noise.matrix())
    }

    /// Residual with its Jacobians for right perturbations of `from` and `to`.
    pub fn linearize(&self, from: &Pose<T>, to: &Pose<T>) -> Result<(SMatrix<T, 6, 1>, Matrix6<T>, Matrix6<T>)> {
        between_linearization(from, to, &self.measured)
    }
}

pub(crate) fn between_linearization<T: Scalar>(
    from: &Pose<T>,
    to: &Pose<T>,
    measured: &Pose<T>,
) -> Result<(SMatrix<T, 6, 1>, Matrix6<T>, Matrix6<T>)> {
    let rel = from.between(to);
    let r = log_map(&measured.inverse().then(&rel))?;
    let jr_inv = right_jacobian_inverse(&r);
    Ok((r.0, -jr_inv * rel.inverse().adjoint(), jr_inv))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct RangeFactor<T: Scalar> {
    /// Measured distance (m).
    pub d: T,
    /// Standard deviation of the distance (m).
    pub sigma: T,
    #[serde(default)]
    pub convention: ExponentConvention,
}

impl<T: Scalar> RangeFactor<T> {
    pub fn new(d: T, sigma: T) -> Result<Self> {
        Self::with_convention(d, sigma, ExponentConvention::default())
    }

    pub fn with_convention(d: T, sigma: T, convention: ExponentConvention) -> Result<Self> {
        if !(d >= T::zero()) {
            return Err(Error::InvalidFactor(format!("range must be non-negative, got {}", d.as_f64())));
        }
        if !(sigma > T::zero()) {
            return Err(Error::InvalidFactor(format!("range sigma must be positive, got {}", sigma.as_f64())));
        }
        Ok(RangeFactor { d, sigma, convention })
    }

    /// `log c₁ = -½ log(2πσ²)`.
    pub fn log_normalizer(&self) -> T {
        -T::lit(0.5) * (T::two_pi() * self.sigma * self.sigma).ln()
    }

    pub fn log_density(&self, x: &Vector3<T>) -> T {
        let r = x.norm() - self.d;
        let w: T = self.convention.weight();
        self.log_normalizer() - w * r * r / (self.sigma * self.sigma)
    }

    /// Gradient of [`Self::log_density`] with respect to the relative translation.
    pub fn gradient(&self, x: &Vector3<T>) -> Vector3<T> {
        let n = x.norm();
        if n == T::zero() {
            return Vector3::zeros();
        }
        let w: T = self.convention.weight();
        x * (T::lit(2.0) * w * (self.d - n) / (self.sigma * self.sigma * n))
    }

    /// Fisher information with respect to the relative translation (rank 1, radial).
    pub fn information(&self, x: &Vector3<T>) -> Result<Matrix3<T>> {
        let n = x.norm();
        if n <= T::lit(1e-9) {
            return Err(Error::DegenerateGeometry("range information at zero separation".into()));
        }
        let u = x / n;
        Ok(u * u.transpose() / self.variance())
    }

    /// Variance of the distance implied by the factor's curvature, `σ²/(2w)`.
    pub fn variance(&self) -> T {
        let w: T = self.convention.weight();
        self.sigma * self.sigma / (T::lit(2.0) * w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct AoaMode<T: Scalar> {
    /// Azimuth in the receiver body frame (rad).
    pub phi: T,
    /// Von Mises concentration, the inverse of the angular variance.
    pub kappa: T,
    /// Probability that this mode is the direct path.
    pub prior: T,
}

impl<T: Scalar> AoaMode<T> {
    pub fn new(phi: T, kappa: T, prior: T) -> Result<Self> {
        if !(kappa > T::lit(KAPPA_FLOOR)) {
            log::warn!("rejecting AOA mode with kappa {} <= {KAPPA_FLOOR}", kappa.as_f64());
            return Err(Error::InvalidFactor(format!(
                "kappa {} must exceed {KAPPA_FLOOR}",
                kappa.as_f64()
            )));
        }
        if !(prior >= T::zero() && prior <= T::one()) {
            return Err(Error::InvalidFactor(format!("prior {} outside [0, 1]", prior.as_f64())));
        }
        Ok(AoaMode { phi, kappa, prior })
    }

    /// Mode with `κ = 1/σ²` from an angular standard deviation.
    pub fn from_sigma(phi: T, sigma: T, prior: T) -> Result<Self> {
        Self::new(phi, T::one() / (sigma * sigma), prior)
    }

    /// `log c₂ = -log(2π I₀(κ))`.
    pub fn log_normalizer(&self) -> T {
        -(T::two_pi().ln() + ln_bessel_i0(self.kappa))
    }

    fn planar(x: &Vector3<T>) -> Result<(T, T, T)> {
        let r = (x.x * x.x + x.y * x.y).sqrt();
        if r <= T::lit(1e-9) {
            return Err(Error::DegenerateGeometry(
                "bearing undefined for a transmitter on the receiver's vertical axis".into(),
            ));
        }
        Ok((x.x, x.y, r))
    }

    pub fn log_density(&self, x: &Vector3<T>) -> Result<T> {
        let (px, py, r) = Self::planar(x)?;
        let cos_err = (px * self.phi.cos() + py * self.phi.sin()) / r;
        Ok(self.log_normalizer() + self.kappa * cos_err)
    }

    pub fn gradient(&self, x: &Vector3<T>) -> Result<Vector3<T>> {
        let (px, py, r) = Self::planar(x)?;
        let (s, c) = (self.phi.sin(), self.phi.cos());
        let dot = px * c + py * s;
        let r3 = r * r * r;
        Ok(Vector3::new(
            self.kappa * (c / r - dot * px / r3),
            self.kappa * (s / r - dot * py / r3),
            T::zero(),
        ))
    }

    /// Expected information on the bearing angle, `κ I₁(κ)/I₀(κ)`.
    pub fn bearing_information(&self) -> T {
        self.kappa * bessel_ratio_i1_i0(self.kappa)
    }

    pub fn bearing_variance(&self) -> T {
        T::one() / self.bearing_information()
    }

    /// Fisher information with respect to the relative translation (rank 1, tangential).
    pub fn information(&self, x: &Vector3<T>) -> Result<Matrix3<T>> {
        let (px, py, r) = Self::planar(x)?;
        let g = Vector3::new(-py, px, T::zero()) / (r * r);
        Ok(g * g.transpose() * self.bearing_information())
    }

    pub fn bearing(&self) -> Vector3<T> {
        Vector3::new(self.phi.cos(), self.phi.sin(), T::zero())
    }
}

/// One inter-robot sensing event: a range plus a multimodal bearing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct CommMeasurement<T: Scalar> {
    pub id: u32,
    pub receiver: Endpoint,
    pub transmitter: Endpoint,
    pub range: RangeFactor<T>,
    pub modes: Vec<AoaMode<T>>,
    /// Relative yaw of the transmitter body in the receiver body frame, from a
    /// shared heading reference. Used as the mean of the heading prior.
    #[serde(default)]
    pub heading: Option<T>,
    /// Simulation ground truth only: index of the direct-path mode.
    #[serde(default)]
    pub truth_direct_index: Option<usize>,
}

impl<T: Scalar> CommMeasurement<T> {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidFactor(format!("measurement {} has no AOA modes", self.id)));
        }
        let total = self.modes.iter().fold(T::zero(), |acc, m| acc + m.prior);
        if total > T::one() + T::lit(1e-9) {
            return Err(Error::InvalidFactor(format!(
                "measurement {} mode priors sum to {}",
                self.id,
                total.as_f64()
            )));
        }
        if self.receiver.robot == self.transmitter.robot {
            return Err(Error::InvalidFactor(format!(
                "measurement {} links robot {} to itself",
                self.id, self.receiver.robot
            )));
        }
        Ok(())
    }

    /// Sets every mode prior to `1/|modes|`.
    pub fn with_uniform_priors(mut self) -> Self {
        let p = T::one() / T::lit(self.modes.len() as f64);
        for m in &mut self.modes {
            m.prior = p;
        }
        self
    }

    pub fn mode(&self, index: usize) -> Result<&AoaMode<T>> {
        self.modes.get(index).ok_or_else(|| {
            Error::InvalidFactor(format!("measurement {} has no mode {index}", self.id))
        })
    }
}

/// Selected direct-path mode per measurement id; absent ids are unused.
pub type Realization = BTreeMap<u32, usize>;

pub fn log_f_uwb<T: Scalar>(m: &RangeFactor<T>, relative_translation: &Vector3<T>) -> T {
    m.log_density(relative_translation)
}

pub fn log_f_aoa<T: Scalar>(m: &AoaMode<T>, relative_translation: &Vector3<T>) -> Result<T> {
    m.log_density(relative_translation)
}

pub fn log_f_comm<T: Scalar>(range: &RangeFactor<T>, mode: &AoaMode<T>, relative_translation: &Vector3<T>) -> Result<T> {
    Ok(range.log_density(relative_translation) + mode.log_density(relative_translation)?)
}

pub fn grad_log_f_comm<T: Scalar>(
    range: &RangeFactor<T>,
    mode: &AoaMode<T>,
    relative_translation: &Vector3<T>,
) -> Result<Vector3<T>> {
    Ok(range.gradient(relative_translation) + mode.gradient(relative_translation)?)
}

/// Mixture density `Σᵢ f_aoa,ᵢ · p(Pᵢ = 1)`.
pub fn f_multi<T: Scalar>(m: &CommMeasurement<T>, relative_translation: &Vector3<T>) -> Result<T> {
    let mut total = T::zero();
    for mode in &m.modes {
        total += mode.prior * mode.log_density(relative_translation)?.exp();
    }
    Ok(total)
}

/// Gradient of `log f_multi`.
pub fn grad_log_f_multi<T: Scalar>(m: &CommMeasurement<T>, relative_translation: &Vector3<T>) -> Result<Vector3<T>> {
    let mut num = Vector3::zeros();
    let mut den = T::zero();
    for mode in &m.modes {
        let w = mode.prior * mode.log_density(relative_translation)?.exp();
        num += mode.gradient(relative_translation)? * w;
        den += w;
    }
    if den == T::zero() {
        return Err(Error::DegenerateGeometry("mixture density vanished".into()));
    }
    Ok(num / den)
}

/// Fisher information of `f_comm` with respect to the relative translation.
pub fn comm_information<T: Scalar>(
    range: &RangeFactor<T>,
    mode: &AoaMode<T>,
    relative_translation: &Vector3<T>,
) -> Result<Matrix3<T>> {
    Ok(range.information(relative_translation)? + mode.information(relative_translation)?)
}

/// Gaussian approximation `Σ = I⁻¹` of an information matrix.
///
/// Fails with [`Error::RankDeficient`] when the smallest eigenvalue is below
/// `1e-12` of the largest; callers are expected to add priors first.
pub fn fisher_covariance<T: Scalar, const N: usize>(information: &SMatrix<T, N, N>) -> Result<SMatrix<T, N, N>> {
    let sym = (information + information.transpose()) * T::lit(0.5);
    let eig = DMatrix::from_iterator(N, N, sym.iter().copied()).symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > T::zero()) || min <= max * T::lit(1e-12) {
        return Err(Error::RankDeficient);
    }
    let mut inv = SMatrix::<T, N, N>::zeros();
    for k in 0..N {
        let v = eig.eigenvectors.column(k);
        let outer = v * v.transpose() / eig.eigenvalues[k];
        inv += SMatrix::<T, N, N>::from_iterator(outer.iter().copied());
    }
    Ok((inv + inv.transpose()) * T::lit(0.5))
}

/// Standard deviations of the weak prior placed on the link directions that
/// a range and azimuth cannot observe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPrior {
    /// Relative height (m).
    pub z_sigma: f64,
    /// Relative roll and pitch (rad).
    pub tilt_sigma: f64,
    /// Relative heading of the transmitter around the heading reference (rad).
    pub heading_sigma: f64,
}

impl Default for LinkPrior {
    fn default() -> Self {
        LinkPrior {
            z_sigma: 0.5,
            tilt_sigma: 0.1,
            heading_sigma: 0.1,
        }
    }
}

impl<T: Scalar> CommMeasurement<T> {
    /// Lifts one mode to a full receiver→transmitter transform with its covariance.
    ///
    /// Translation is `d · [cos φ, sin φ, 0]`; yaw is the heading reference (0 when
    /// absent). The covariance is the inverse of the `f_comm` information plus
    /// the [`LinkPrior`] on height, tilt and heading, expressed in the
    /// transmitter's body frame. The information is block diagonal with
    /// orthogonal radial, tangential and vertical directions, so the inverse is
    /// written out directly.
    pub fn lift(&self, mode_index: usize, prior: &LinkPrior) -> Result<(Pose<T>, Covariance6<T>)> {
        let mode = self.mode(mode_index)?;
        if self.range.d <= T::lit(1e-9) {
            return Err(Error::DegenerateGeometry(format!("measurement {} has zero range", self.id)));
        }
        let u = mode.bearing();
        let x = u * self.range.d;
        let yaw = self.heading.unwrap_or_else(T::zero);
        let pose = Pose::from_yaw(yaw, x);
        let t = Vector3::new(-u.y, u.x, T::zero());
        let ez = Vector3::z();
        let d2 = self.range.d * self.range.d;
        let z2 = T::lit(prior.z_sigma * prior.z_sigma);
        let pos = u * u.transpose() * self.range.variance()
            + t * t.transpose() * (d2 * mode.bearing_variance())
            + ez * ez.transpose() * z2;
        let r = pose.rotation;
        let tilt = T::lit(prior.tilt_sigma * prior.tilt_sigma);
        let mut cov = Matrix6::zeros();
        cov[(0, 0)] = tilt;
        cov[(1, 1)] = tilt;
        cov[(2, 2)] = T::lit(prior.heading_sigma * prior.heading_sigma);
        cov.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(r.transpose() * pos * r));
        Ok((pose, Covariance6::from_matrix_unchecked(cov)))
    }

    /// Information form of [`Self::lift`]'s covariance, assembled from the
    /// factor informations.
    pub fn lift_information(&self, mode_index: usize, prior: &LinkPrior) -> Result<Matrix6<T>> {
        let mode = self.mode(mode_index)?;
        let x = mode.bearing() * self.range.d;
        let r = Pose::<T>::from_yaw(self.heading.unwrap_or_else(T::zero), x).rotation;
        let mut pos_info = comm_information(&self.range, mode, &x)?;
        pos_info[(2, 2)] += T::one() / T::lit(prior.z_sigma * prior.z_sigma);
        let mut info = Matrix6::zeros();
        let tilt = T::one() / T::lit(prior.tilt_sigma * prior.tilt_sigma);
        info[(0, 0)] = tilt;
        info[(1, 1)] = tilt;
        info[(2, 2)] = T::one() / T::lit(prior.heading_sigma * prior.heading_sigma);
        info.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(r.transpose() * pos_info * r));
        Ok(info)
    }
}

/// `ln I₀(x)` for `x ≥ 0`.
pub fn ln_bessel_i0<T: Scalar>(x: T) -> T {
    ln_bessel(0, x)
}

/// `I₁(x)/I₀(x)`.
pub fn bessel_ratio_i1_i0<T: Scalar>(x: T) -> T {
    (ln_bessel(1, x) - ln_bessel(0, x)).exp()
}

fn ln_bessel<T: Scalar>(order: u32, x: T) -> T {
    let x = x.abs();
    if x < T::lit(40.0) {
        // power series Σ (x/2)^(2k+ν) / (k! (k+ν)!)
        let q = x * x / T::lit(4.0);
        let mut term = T::one();
        for k in 1..=order {
            term = term * x / T::lit(2.0 * k as f64);
        }
        let mut sum = term;
        for k in 1..400 {
            term = term * q / T::lit((k * (k + order as usize)) as f64);
            sum += term;
            if term < sum * T::default_epsilon() {
                break;
            }
        }
        sum.ln()
    } else {
        // asymptotic expansion e^x/√(2πx) Σ (-1)^k a_k(ν)/x^k
        let mu = T::lit(4.0 * (order * order) as f64);
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..30 {
            let odd = T::lit((2 * k - 1) as f64);
            let next = -term * (mu - odd * odd) / (T::lit(8.0 * k as f64) * x);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < T::default_epsilon() {
                break;
            }
        }
        x - T::lit(0.5) * (T::two_pi() * x).ln() + sum.ln()
    }
}
