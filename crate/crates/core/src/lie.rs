//! SE(3) poses, se(3) twists and first-order covariance propagation.
//!
//! Twists are ordered `[ω; ρ]`: rotation (radians) first, translation
//! (meters) second. Covariances live in the tangent space of the
//! right perturbation `T · exp(δ)`, i.e. they are expressed in the body frame
//! of the pose they describe. Every Jacobian in the crate follows this
//! convention.

use nalgebra::{DMatrix, Matrix3, Matrix4, Matrix6, SMatrix, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symbolic coordinate frame attached to a pose.
///
/// `Any` is a wildcard that composes with every frame; internal arithmetic
/// uses it freely, while poses handed out by trajectories carry concrete ids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    #[default]
    Any,
    /// Local map frame of a robot.
    Robot(u32),
    /// Body frame of a robot at one trajectory index.
    Body { robot: u32, index: usize },
}

impl Frame {
    fn compatible(self, other: Frame) -> bool {
        self == Frame::Any || other == Frame::Any || self == other
    }
}

/// Rigid-body transform mapping points in `frame_to` into `frame_from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct Pose<T: Scalar> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    pub frame_from: Frame,
    pub frame_to: Frame,
}

/// Element of se(3), ordered `[ω; ρ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist<T: Scalar>(pub Vector6<T>);

/// Symmetric PSD 6×6 covariance over twist coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct Covariance6<T: Scalar>(Matrix6<T>);

/// Which operand of a product a covariance belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianSide {
    /// Covariance of `X` in `X · t`; mapped through `Ad(t⁻¹)`.
    Left,
    /// Covariance of `X` in `t · X`; the Jacobian is the identity.
    Right,
    /// Covariance of `t` itself, mapped to the covariance of `t⁻¹` via `Ad(t)`.
    Inverse,
}

pub fn hat<T: Scalar>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

pub fn vee<T: Scalar>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Returns `(R, V)` for a rotation vector, where `V` is the left Jacobian of SO(3).
fn so3_exp_with_v<T: Scalar>(omega: &Vector3<T>) -> (Matrix3<T>, Matrix3<T>) {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let w2 = w * w;
    let i = Matrix3::identity();
    if theta < T::lit(T::SMALL_ANGLE) {
        let half = T::lit(0.5);
        let sixth = T::lit(1.0 / 6.0);
        (i + w + w2 * half, i + w * half + w2 * sixth)
    } else {
        let s = theta.sin();
        let half_sin = (theta * T::lit(0.5)).sin();
        let a = s / theta;
        let b = T::lit(2.0) * half_sin * half_sin / theta2;
        let cc = if theta < T::lit(1e-2) {
            T::lit(1.0 / 6.0) - theta2 / T::lit(120.0) + theta2 * theta2 / T::lit(5040.0)
        } else {
            (theta - s) / (theta2 * theta)
        };
        (i + w * a + w2 * b, i + w * b + w2 * cc)
    }
}

/// Rotation vector of `r` together with the inverse left Jacobian.
fn so3_log_with_vinv<T: Scalar>(r: &Matrix3<T>) -> Result<(Vector3<T>, Matrix3<T>)> {
    let skew = vee(&(r - r.transpose()));
    let sin_theta = skew.norm() * T::lit(0.5);
    let cos_theta = (r.trace() - T::one()) * T::lit(0.5);
    let theta = sin_theta.atan2(cos_theta);
    if theta > T::pi() - T::lit(1e-6) {
        return Err(Error::NearPi { angle: theta.as_f64() });
    }
    let i = Matrix3::identity();
    let half = T::lit(0.5);
    if theta < T::lit(T::SMALL_ANGLE) {
        let omega = skew * half * (T::one() + theta * theta / T::lit(6.0));
        let w = hat(&omega);
        Ok((omega, i - w * half + w * w / T::lit(12.0)))
    } else {
        let omega = skew * (theta / (T::lit(2.0) * sin_theta));
        let w = hat(&omega);
        let t2 = theta * theta;
        // (1 - (θ/2) cot(θ/2)) / θ²
        let coef = if theta < T::lit(1e-2) {
            T::lit(1.0 / 12.0) + t2 / T::lit(720.0) + t2 * t2 / T::lit(30240.0)
        } else {
            let h = theta * T::lit(0.5);
            (T::one() - h * h.cos() / h.sin()) / t2
        };
        Ok((omega, i - w * half + w * w * coef))
    }
}

impl<T: Scalar> Twist<T> {
    pub fn new(rotation: Vector3<T>, translation: Vector3<T>) -> Self {
        Twist(Vector6::new(
            rotation.x,
            rotation.y,
            rotation.z,
            translation.x,
            translation.y,
            translation.z,
        ))
    }

    pub fn zero() -> Self {
        Twist(Vector6::zeros())
    }

    pub fn rotation(&self) -> Vector3<T> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vector3<T> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    /// Small adjoint `ad(ξ)`, the matrix of the Lie bracket `[ξ, ·]`.
    pub fn ad(&self) -> Matrix6<T> {
        let mut m = Matrix6::zeros();
        let w = hat(&self.rotation());
        let r = hat(&self.translation());
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&r);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
        m
    }
}

/// Exponential map se(3) → SE(3).
pub fn exp_map<T: Scalar>(xi: &Twist<T>) -> Pose<T> {
    let (r, v) = so3_exp_with_v(&xi.rotation());
    Pose::new(r, v * xi.translation())
}

/// Logarithm map SE(3) → se(3); fails when the rotation angle is within 1e-6 of π.
pub fn log_map<T: Scalar>(p: &Pose<T>) -> Result<Twist<T>> {
    let (omega, v_inv) = so3_log_with_vinv(&p.rotation)?;
    Ok(Twist::new(omega, v_inv * p.translation))
}

/// Inverse right Jacobian of SE(3), truncated after the second-order term.
///
/// Accurate to `O(‖ξ‖³)`, which is what the Gauss-Newton residual linearization needs.
pub fn right_jacobian_inverse<T: Scalar>(xi: &Twist<T>) -> Matrix6<T> {
    let ad = xi.ad();
    Matrix6::identity() + ad * T::lit(0.5) + ad * ad / T::lit(12.0)
}

impl<T: Scalar> Pose<T> {
    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    /// Builds a pose with wildcard frames.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Pose {
            rotation,
            translation,
            frame_from: Frame::Any,
            frame_to: Frame::Any,
        }
    }

    /// Builds a pose after checking orthonormality and `det R = +1`.
    pub fn try_new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det_dev = (rotation.determinant() - T::one()).abs();
        let dev = if det_dev > dev { det_dev } else { dev };
        if dev > T::lit(1e-9) {
            return Err(Error::NotOrthonormal { deviation: dev.as_f64() });
        }
        Ok(Self::new(rotation, translation))
    }

    pub fn with_frames(mut self, from: Frame, to: Frame) -> Self {
        self.frame_from = from;
        self.frame_to = to;
        self
    }

    /// Planar pose: rotation `yaw` about +z.
    pub fn from_yaw(yaw: T, translation: Vector3<T>) -> Self {
        let (s, c) = (yaw.sin(), yaw.cos());
        let z = T::zero();
        let o = T::one();
        Self::new(Matrix3::new(c, -s, z, s, c, z, z, z, o), translation)
    }

    pub fn from_quaternion(q: &UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self::new(q.to_rotation_matrix().into_inner(), translation)
    }

    pub fn quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    /// Yaw extracted as `atan2(R₁₀, R₀₀)`.
    pub fn yaw(&self) -> T {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<T>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
            frame_from: self.frame_to,
            frame_to: self.frame_from,
        }
    }

    /// Frame-checked composition `self · other`.
    pub fn compose(&self, other: &Pose<T>) -> Result<Pose<T>> {
        if !self.frame_to.compatible(other.frame_from) {
            return Err(Error::FrameMismatch {
                left: self.frame_to,
                right: other.frame_from,
            });
        }
        Ok(self.then(other))
    }

    /// Composition `self · other` without the frame check.
    pub fn then(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            frame_from: self.frame_from,
            frame_to: other.frame_to,
        }
    }

    /// `self⁻¹ · other`, the transform from this pose to `other`.
    pub fn between(&self, other: &Pose<T>) -> Pose<T> {
        self.inverse().then(other)
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Adjoint `Ad(T)` with `T exp(ξ) T⁻¹ = exp(Ad(T) ξ)`.
    pub fn adjoint(&self) -> Matrix6<T> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(hat(&self.translation) * self.rotation));
        m
    }

    /// `T · exp(δ)`.
    pub fn retract(&self, delta: &Twist<T>) -> Pose<T> {
        let mut p = self.then(&exp_map(delta));
        p.frame_to = self.frame_to;
        p
    }

    /// Rotational deviation `‖Rᵀ R - I‖_F` plus translational distance to `other`.
    pub fn distance_to(&self, other: &Pose<T>) -> (T, T) {
        (
            (self.rotation - other.rotation).norm(),
            (self.translation - other.translation).norm(),
        )
    }
}

impl<T: Scalar> Covariance6<T> {
    /// Validates symmetry (1e-12 relative to scale) and PSD (min eigenvalue ≥ -1e-9).
    pub fn new(m: Matrix6<T>) -> Result<Self> {
        let scale = m.amax().max(T::one());
        let dev = (m - m.transpose()).amax();
        if dev > T::lit(1e-12) * scale {
            return Err(Error::Asymmetric { deviation: dev.as_f64() });
        }
        let c = Covariance6(symmetrize(&m));
        let min = c.min_eigenvalue();
        if min < T::lit(-1e-9) * scale {
            return Err(Error::NotPsd { min_eigenvalue: min.as_f64() });
        }
        Ok(c)
    }

    /// Wraps a matrix produced by propagation, forcing exact symmetry.
    pub fn from_matrix_unchecked(m: Matrix6<T>) -> Self {
        Covariance6(symmetrize(&m))
    }

    pub fn zeros() -> Self {
        Covariance6(Matrix6::zeros())
    }

    pub fn from_diagonal(d: &Vector6<T>) -> Self {
        Covariance6(Matrix6::from_diagonal(d))
    }

    /// Block-diagonal covariance with isotropic rotational and translational parts.
    pub fn isotropic(rot_sigma: T, trans_sigma: T) -> Self {
        let r = rot_sigma * rot_sigma;
        let t = trans_sigma * trans_sigma;
        Self::from_diagonal(&Vector6::new(r, r, r, t, t, t))
    }

    pub fn matrix(&self) -> &Matrix6<T> {
        &self.0
    }

    pub fn rotational(&self) -> Matrix3<T> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Translational 3×3 block, in the body frame of the described pose.
    pub fn translational(&self) -> Matrix3<T> {
        self.0.fixed_view::<3, 3>(3, 3).into_owned()
    }

    pub fn min_eigenvalue(&self) -> T {
        let e = self.0.symmetric_eigen().eigenvalues;
        e.min()
    }

    /// `J Σ Jᵀ`, symmetrized.
    pub fn transformed(&self, j: &Matrix6<T>) -> Self {
        Covariance6::from_matrix_unchecked(j * self.0 * j.transpose())
    }
}

impl<T: Scalar> std::ops::Add for Covariance6<T> {
    type Output = Covariance6<T>;
    fn add(self, rhs: Self) -> Self {
        Covariance6(self.0 + rhs.0)
    }
}

fn symmetrize<T: Scalar, const N: usize>(m: &SMatrix<T, N, N>) -> SMatrix<T, N, N> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Maps a covariance through the Jacobian selected by `side` (see [`JacobianSide`]).
pub fn propagate_covariance<T: Scalar>(
    t: &Pose<T>,
    sigma: &Covariance6<T>,
    side: JacobianSide,
) -> Covariance6<T> {
    match side {
        JacobianSide::Left => sigma.transformed(&t.inverse().adjoint()),
        JacobianSide::Right => *sigma,
        JacobianSide::Inverse => sigma.transformed(&t.adjoint()),
    }
}

/// Product of two independent uncertain poses, `a · b`, with its covariance.
pub fn compound<T: Scalar>(
    a: &Pose<T>,
    sigma_a: &Covariance6<T>,
    b: &Pose<T>,
    sigma_b: &Covariance6<T>,
) -> (Pose<T>, Covariance6<T>) {
    let cov = propagate_covariance(b, sigma_a, JacobianSide::Left) + *sigma_b;
    (a.then(b), cov)
}

/// Inverse of an uncertain pose with its covariance.
pub fn invert<T: Scalar>(a: &Pose<T>, sigma: &Covariance6<T>) -> (Pose<T>, Covariance6<T>) {
    (a.inverse(), propagate_covariance(a, sigma, JacobianSide::Inverse))
}

/// Translational covariance of a relative pose, rotated into its reference frame.
pub fn position_covariance<T: Scalar>(pose: &Pose<T>, sigma: &Covariance6<T>) -> Matrix3<T> {
    let r = pose.rotation;
    symmetrize(&(r * sigma.translational() * r.transpose()))
}

/// Largest eigenvalue of a symmetric matrix.
///
/// Rejects input whose asymmetry exceeds 1e-9 (relative to its largest entry
/// when that exceeds one).
pub fn max_eigenvalue<T: Scalar, const N: usize>(m: &SMatrix<T, N, N>) -> Result<T> {
    let scale = m.amax().max(T::one());
    let dev = (m - m.transpose()).amax();
    if dev > T::lit(1e-9) * scale {
        return Err(Error::Asymmetric { deviation: dev.as_f64() });
    }
    if N == 0 {
        return Ok(T::zero());
    }
    let d = DMatrix::from_iterator(N, N, symmetrize(m).iter().copied());
    Ok(d.symmetric_eigen().eigenvalues.max())
}

/// Largest eigenvalue of a symmetric 3×3 matrix by the trigonometric closed form.
pub fn max_eigenvalue_sym3<T: Scalar>(m: &Matrix3<T>) -> T {
    let p1 = m[(0, 1)] * m[(0, 1)] + m[(0, 2)] * m[(0, 2)] + m[(1, 2)] * m[(1, 2)];
    let q = m.trace() / T::lit(3.0);
    let (a, b, c) = (m[(0, 0)] - q, m[(1, 1)] - q, m[(2, 2)] - q);
    let p2 = a * a + b * b + c * c + T::lit(2.0) * p1;
    if p2 <= T::default_epsilon() * (q.abs() + T::one()) {
        return m[(0, 0)].max(m[(1, 1)]).max(m[(2, 2)]);
    }
    let p = (p2 / T::lit(6.0)).sqrt();
    let bm = (m - Matrix3::identity() * q) / p;
    let r = (bm.determinant() / T::lit(2.0)).clamp(-T::one(), T::one());
    let phi = r.acos() / T::lit(3.0);
    q + T::lit(2.0) * p * phi.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_twist(rng: &mut ChaCha8Rng, max_rot: f64) -> Twist<f64> {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_rot);
        let t = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        Twist::new(axis * angle, t)
    }

    #[test]
    fn identity_compositions() {
        let i = Pose::<f64>::identity();
        let c = i.compose(&i).unwrap();
        assert_eq!(c.rotation, Matrix3::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = exp_map(&random_twist(&mut rng, 3.0));
        let c = t.compose(&t.inverse()).unwrap();
        assert!((c.rotation - Matrix3::identity()).norm() < 1e-9);
        assert!(c.translation.norm() < 1e-9);
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = exp_map(&random_twist(&mut rng, 3.0));
            let b = exp_map(&random_twist(&mut rng, 3.0));
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            let got = a.then(&b).to_homogeneous();
            assert!((oracle - got).amax() < 1e-12);
        }
    }

    #[test]
    fn compose_checks_frames() {
        let a = Pose::<f64>::identity().with_frames(Frame::Robot(0), Frame::Body { robot: 0, index: 1 });
        let b = Pose::<f64>::identity().with_frames(Frame::Body { robot: 0, index: 2 }, Frame::Robot(0));
        assert!(matches!(a.compose(&b), Err(Error::FrameMismatch { .. })));
        let b = b.with_frames(Frame::Body { robot: 0, index: 1 }, Frame::Body { robot: 0, index: 3 });
        let c = a.compose(&b).unwrap();
        assert_eq!(c.frame_from, Frame::Robot(0));
        assert_eq!(c.frame_to, Frame::Body { robot: 0, index: 3 });
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = exp_map(&random_twist(&mut rng, 3.0));
            let b = exp_map(&random_twist(&mut rng, 3.0));
            let c = exp_map(&random_twist(&mut rng, 3.0));
            let (dr, dt) = a.then(&b).then(&c).distance_to(&a.then(&b.then(&c)));
            assert!(dr < 1e-9 && dt < 1e-9);
        }
    }

    #[test]
    fn log_exp_special_cases() {
        let xi = log_map(&Pose::<f64>::identity()).unwrap();
        assert_eq!(xi.0, Vector6::zeros());
        let p = exp_map(&Twist(Vector6::new(0.0, 0.0, 0.0, 1.0, 2.0, 3.0)));
        assert_eq!(p.rotation, Matrix3::identity());
        assert_relative_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-15);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let xi = random_twist(&mut rng, 3.0);
            let back = log_map(&exp_map(&xi)).unwrap();
            worst = worst.max((back.0 - xi.0).amax());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst:e}");
        for scale in [1e-12, 1e-9, 5e-8, 2e-7, 1e-5] {
            let xi = Twist::new(Vector3::new(0.3, -0.5, 0.8) * scale, Vector3::new(1.0, 2.0, -1.0));
            let p = exp_map(&xi);
            let back = log_map(&p).unwrap();
            assert!((back.0 - xi.0).amax() < 1e-12);
            let (dr, dt) = exp_map(&back).distance_to(&p);
            assert!(dr < 1e-12 && dt < 1e-12);
        }
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = exp_map(&Twist::new(Vector3::new(0.0, 0.0, std::f64::consts::PI), Vector3::zeros()));
        assert!(matches!(log_map(&p), Err(Error::NearPi { .. })));
    }

    #[test]
    fn f32_round_trip() {
        let xi = Twist::<f32>::new(Vector3::new(0.2, -0.4, 1.1), Vector3::new(1.0, -2.0, 0.5));
        let back = log_map(&exp_map(&xi)).unwrap();
        assert!((back.0 - xi.0).amax() < 1e-5);
        let tiny = Twist::<f32>::new(Vector3::new(1e-5, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0));
        let back = log_map(&exp_map(&tiny)).unwrap();
        assert!((back.0 - tiny.0).amax() < 1e-6);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = exp_map(&random_twist(&mut rng, 3.0));
            let xi = random_twist(&mut rng, 0.5);
            let lhs = t.then(&exp_map(&xi)).then(&t.inverse());
            let rhs = exp_map(&Twist(t.adjoint() * xi.0));
            let (dr, dt) = lhs.distance_to(&rhs);
            assert!(dr < 1e-9 && dt < 1e-9);
        }
    }

    #[test]
    fn right_jacobian_inverse_linearizes_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xi = Twist::new(Vector3::new(0.01, -0.02, 0.015), Vector3::new(0.05, 0.02, -0.03));
        let p = exp_map(&xi);
        let jinv = right_jacobian_inverse(&xi);
        for _ in 0..10 {
            let d = random_twist(&mut rng, 1e-4);
            let d = Twist(d.0 * 1e-4);
            let lhs = log_map(&p.retract(&d)).unwrap().0 - xi.0;
            let rhs = jinv * d.0;
            assert!((lhs - rhs).amax() < 1e-9);
        }
    }

    #[test]
    fn propagate_identity_and_yaw() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = Matrix6::<f64>::zeros();
        for v in a.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let sigma = Covariance6::new(a * a.transpose()).unwrap();
        let out = propagate_covariance(&Pose::identity(), &sigma, JacobianSide::Left);
        assert!((out.matrix() - sigma.matrix()).amax() < 1e-15);

        let diag = Covariance6::from_diagonal(&Vector6::new(0.01, 0.02, 0.03, 1.0, 4.0, 9.0));
        let yaw = Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vector3::zeros());
        let out = propagate_covariance(&yaw, &diag, JacobianSide::Left);
        let t = out.translational();
        assert_relative_eq!(t[(0, 0)], 4.0, epsilon = 1e-12);
        assert_relative_eq!(t[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(t[(2, 2)], 9.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_validation() {
        let mut m = Matrix6::<f64>::identity();
        m[(0, 1)] = 0.1;
        assert!(matches!(Covariance6::new(m), Err(Error::Asymmetric { .. })));
        let m = Matrix6::<f64>::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 1.0, 1.0, -0.5));
        assert!(matches!(Covariance6::new(m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn eigen_basics() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(max_eigenvalue(&m).unwrap(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(max_eigenvalue(&Matrix6::<f64>::identity()).unwrap(), 1.0, epsilon = 1e-14);
        let mut asym = Matrix3::<f64>::identity();
        asym[(0, 2)] = 1e-3;
        assert!(max_eigenvalue(&asym).is_err());
        assert_relative_eq!(max_eigenvalue_sym3(&m), 3.0, epsilon = 1e-12);
        assert_relative_eq!(max_eigenvalue_sym3(&(Matrix3::identity() * 2.5)), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let mut a = Matrix3::<f64>::zeros();
            for v in a.iter_mut() {
                *v = rng.random_range(-3.0..3.0);
            }
            let s = a * a.transpose();
            let g = max_eigenvalue(&s).unwrap();
            assert!((max_eigenvalue_sym3(&s) - g).abs() <= 1e-9 * g.max(1.0));
        }
    }
}
