//! Rotations, grasp poses and the Lie-group maps between SO(3) and so(3).
//!
//! Rotations are stored as 3x3 orthonormal matrices. The exponential and
//! logarithm maps are written out in closed form (Rodrigues) with series
//! branches near zero and an axis-extraction branch near pi, so that
//! roundtrips stay at machine precision over the whole canonical ball.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance accepted by [`Rotation::new`] and [`log_map_so3`].
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Below this angle the exp/log maps switch to their Taylor branches.
const SMALL_ANGLE: f64 = 1e-6;

/// `trace(R) <= -1 + NEAR_PI_TRACE` selects the near-pi log branch.
const NEAR_PI_TRACE: f64 = 1e-6;

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Checked constructor: `m` must be orthonormal with determinant +1.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let err = orthonormality_error(&m);
        if err > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "matrix is not a rotation (orthonormality error {err:.3e})"
            )));
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.0)
    }

    /// Unit quaternion `[w, x, y, z]` with the sign fixed so that `w >= 0`.
    pub fn to_quat_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        let q = q.quaternion();
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        if w < 0.0 {
            [-w, -x, -y, -z]
        } else {
            [w, x, y, z]
        }
    }

    /// Builds a rotation from a (not necessarily normalized) `[w, x, y, z]` quaternion.
    pub fn from_quat_wxyz(q: [f64; 4]) -> Result<Self> {
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("quaternion has non-finite entries"));
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::invalid("zero quaternion"));
        }
        let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Ok(Rotation(*uq.to_rotation_matrix().matrix()))
    }

    /// Haar-uniform random rotation (normalized Gaussian quaternion).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            if let Ok(r) = Rotation::from_quat_wxyz(q) {
                return r;
            }
        }
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    let gram = m.transpose() * m - Matrix3::identity();
    let ortho = gram.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    ortho.max((m.determinant() - 1.0).abs())
}

fn vee_skew(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

pub fn hat(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5 * vee_skew(m).norm();
    sin.atan2(cos)
}

/// Lie-algebra coordinates of a rotation (axis times angle, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotVec(pub Vec3);

impl RotVec {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        RotVec(Vec3::new(x, y, z))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Rodrigues' formula, with a second-order Taylor expansion near zero.
pub fn exp_map_so3(omega: &RotVec) -> Result<Rotation> {
    let w = omega.0;
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation vector has non-finite entries"));
    }
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(&w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Ok(Rotation(Matrix3::identity() + k * a + k * k * b))
}

/// Inverse of [`exp_map_so3`] on the closed ball of radius pi.
///
/// At exactly pi the axis sign is ambiguous; the returned axis has its
/// largest-magnitude component positive.
pub fn log_map_so3(r: &Rotation) -> Result<RotVec> {
    let m = r.0;
    if !m.iter().all(|v| v.is_finite()) || orthonormality_error(&m) > ORTHONORMAL_TOL {
        return Err(Error::invalid("log map of a non-orthonormal matrix"));
    }
    let skew = vee_skew(&m);
    let trace = m.trace();
    let theta = rotation_angle(&m);

    if trace > -1.0 + NEAR_PI_TRACE {
        let scale = if theta < SMALL_ANGLE {
            0.5 * (1.0 + theta * theta / 6.0)
        } else {
            theta / (2.0 * theta.sin())
        };
        return Ok(RotVec(skew * scale));
    }

    // Near pi: (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) n n^T.
    let cos = theta.cos();
    let sym = (m + m.transpose()) * 0.5;
    let nn = (sym - Matrix3::identity() * cos) / (1.0 - cos);
    let k = (0..3)
        .max_by(|&i, &j| nn[(i, i)].total_cmp(&nn[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vec3 = nn.column(k).into_owned() / nn[(k, k)].max(0.0).sqrt();
    axis /= axis.norm();
    let dot = axis.dot(&skew);
    if dot < 0.0 || (dot == 0.0 && axis[k] < 0.0) {
        axis = -axis;
    }
    Ok(RotVec(axis * theta))
}

/// A gripper pose in the object frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl GraspPose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        GraspPose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        GraspPose::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        GraspPose::new(Rotation::identity(), t)
    }

    /// Maps a point from the gripper frame into the object frame.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// Maps a point from the object frame into the gripper frame.
    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose().apply(&(p - self.translation))
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// `self * other` (apply `other` first).
    pub fn compose(&self, other: &GraspPose) -> GraspPose {
        GraspPose::new(
            self.rotation.compose(&other.rotation),
            self.transform_point(&other.translation),
        )
    }

    pub fn inverse(&self) -> GraspPose {
        let rt = self.rotation.transpose();
        GraspPose::new(rt, -rt.apply(&self.translation))
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.matrix().iter().all(|v| v.is_finite())
    }
}

/// Wire form: translation in meters plus a `w >= 0` unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub quat_wxyz: [f64; 4],
    pub trans: [f64; 3],
}

impl From<&GraspPose> for PoseRecord {
    fn from(g: &GraspPose) -> Self {
        PoseRecord {
            quat_wxyz: g.rotation.to_quat_wxyz(),
            trans: [g.translation.x, g.translation.y, g.translation.z],
        }
    }
}

impl TryFrom<&PoseRecord> for GraspPose {
    type Error = Error;

    fn try_from(rec: &PoseRecord) -> Result<Self> {
        if !rec.trans.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose translation is not finite"));
        }
        Ok(GraspPose::new(
            Rotation::from_quat_wxyz(rec.quat_wxyz)?,
            Vec3::from(rec.trans),
        ))
    }
}

/// Translation term of [`pose_distance`].
pub fn translation_distance(a: &GraspPose, b: &GraspPose) -> f64 {
    (a.translation - b.translation).norm()
}

/// Geodesic angle between the two rotations, `||log(Ra^T Rb)||`.
pub fn rotation_distance(a: &GraspPose, b: &GraspPose) -> f64 {
    rotation_angle(&(a.rotation.matrix().transpose() * b.rotation.matrix()))
}

/// `||t_a - t_b|| + ||log(R_a^-1 R_b)||`.
pub fn pose_distance(a: &GraspPose, b: &GraspPose) -> f64 {
    translation_distance(a, b) + rotation_distance(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReprKind {
    #[default]
    LieAlgebra,
    Euler,
    SixD,
}

impl ReprKind {
    pub const ALL: [ReprKind; 3] = [ReprKind::LieAlgebra, ReprKind::Euler, ReprKind::SixD];

    pub fn width(self) -> usize {
        match self {
            ReprKind::LieAlgebra | ReprKind::Euler => 3,
            ReprKind::SixD => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReprKind::LieAlgebra => "lie_algebra",
            ReprKind::Euler => "euler",
            ReprKind::SixD => "six_d",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ReprKind::LieAlgebra => 0,
            ReprKind::Euler => 1,
            ReprKind::SixD => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        ReprKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for ReprKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReprKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lie_algebra" | "lie" | "liealgebra" => Ok(ReprKind::LieAlgebra),
            "euler" => Ok(ReprKind::Euler),
            "six_d" | "sixd" | "6d" => Ok(ReprKind::SixD),
            other => Err(Error::invalid(format!("unknown rotation representation `{other}`"))),
        }
    }
}

/// Rotation coordinates as fed to the networks.
///
/// Lie-algebra and Euler angles are divided by pi so every component lies
/// in `[-1, 1]`; the 6D columns are unit vectors and are passed unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationRepr {
    pub kind: ReprKind,
    pub values: Vec<f64>,
}

pub fn rotation_to_repr(r: &Rotation, kind: ReprKind) -> RotationRepr {
    let m = r.matrix();
    let values = match kind {
        ReprKind::LieAlgebra => {
            // log of a stored rotation cannot fail its own invariant check
            let w = log_map_so3(r).map(|w| w.0).unwrap_or_else(|_| Vec3::zeros());
            vec![w.x / PI, w.y / PI, w.z / PI]
        }
        ReprKind::Euler => {
            let (yaw, pitch, roll) = euler_zyx(m);
            vec![yaw / PI, pitch / PI, roll / PI]
        }
        ReprKind::SixD => vec![
            m[(0, 0)],
            m[(1, 0)],
            m[(2, 0)],
            m[(0, 1)],
            m[(1, 1)],
            m[(2, 1)],
        ],
    };
    RotationRepr { kind, values }
}

/// Intrinsic ZYX angles `(yaw, pitch, roll)` with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
///
/// At gimbal lock (`|pitch| = pi/2`) roll is set to zero and yaw absorbs the
/// remaining rotation, which still decodes to the same matrix.
fn euler_zyx(m: &Matrix3<f64>) -> (f64, f64, f64) {
    let s = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = s.asin();
    if s.abs() > 1.0 - 1e-12 {
        let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
        (yaw, pitch, 0.0)
    } else {
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        (yaw, pitch, roll)
    }
}

pub fn repr_to_rotation(repr: &RotationRepr) -> Result<Rotation> {
    decode_repr(repr.kind, &repr.values)
}

/// Decodes raw representation coordinates (possibly off-manifold network output).
pub fn decode_repr(kind: ReprKind, values: &[f64]) -> Result<Rotation> {
    if values.len() != kind.width() {
        return Err(Error::invalid(format!(
            "{kind} representation needs {} values, got {}",
            kind.width(),
            values.len()
        )));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation representation has non-finite values"));
    }
    match kind {
        ReprKind::LieAlgebra => exp_map_so3(&RotVec::new(
            values[0] * PI,
            values[1] * PI,
            values[2] * PI,
        )),
        ReprKind::Euler => {
            let r = Rotation::about_z(values[0] * PI)
                .compose(&Rotation::about_y(values[1] * PI))
                .compose(&Rotation::about_x(values[2] * PI));
            Ok(r)
        }
        ReprKind::SixD => Ok(gram_schmidt(
            Vec3::new(values[0], values[1], values[2]),
            Vec3::new(values[3], values[4], values[5]),
        )),
    }
}

/// Orthonormalizes two column vectors into a right-handed frame.
///
/// Degenerate inputs (zero first column, parallel columns) fall back to a
/// fixed helper axis so the result is always a valid rotation.
fn gram_schmidt(a1: Vec3, a2: Vec3) -> Rotation {
    let b1 = if a1.norm() > 1e-12 { a1.normalize() } else { Vec3::x() };
    let mut u2 = a2 - b1 * b1.dot(&a2);
    if u2.norm() < 1e-12 {
        let helper = if b1.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        u2 = helper - b1 * b1.dot(&helper);
    }
    let b2 = u2.normalize();
    let b3 = b1.cross(&b2);
    Rotation(Matrix3::from_columns(&[b1, b2, b3]))
}
