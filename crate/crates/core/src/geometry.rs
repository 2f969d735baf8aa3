//! Rigid-body algebra: vectors, rotations, SE(3) transforms, point clouds and poses.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;

/// Threshold below which frame vectors are considered degenerate.
pub const FRAME_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_squared())
    }

    /// Unit vector in the same direction, or `None` when the norm is below `eps`.
    pub fn try_normalize(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        if n > eps {
            Some(self / n)
        } else {
            None
        }
    }

    /// Squared Euclidean distance, evaluated component-wise in x, y, z order.
    pub fn distance_squared(self, o: Vec3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(self, o: Vec3) -> f64 {
        math::sqrt(self.distance_squared(o))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        math::fabs(self.x).max(math::fabs(self.y)).max(math::fabs(self.z))
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// A 3×3 rotation matrix, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Wraps a row-major matrix after checking orthonormality and orientation.
    pub fn from_matrix(m: [[f64; 3]; 3], tol: f64) -> Result<Rotation> {
        let r = Rotation { m };
        if r.orthonormality_error() > tol || math::fabs(r.determinant() - 1.0) > tol {
            return Err(Error::NotARotation);
        }
        Ok(r)
    }

    /// Wraps a row-major matrix without validation.
    pub fn from_matrix_unchecked(m: [[f64; 3]; 3]) -> Rotation {
        Rotation { m }
    }

    /// Builds the rotation whose columns are `c0`, `c1`, `c2`.
    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Rotation {
        Rotation {
            m: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Rotation {
        let a = axis.try_normalize(0.0).unwrap_or(Vec3::Z);
        let (s, c) = (math::sin(angle), math::cos(angle));
        let t = 1.0 - c;
        Rotation {
            m: [
                [t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y],
                [t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x],
                [t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c],
            ],
        }
    }

    pub fn rot_z(angle: f64) -> Rotation {
        Rotation::from_axis_angle(Vec3::Z, angle)
    }

    /// Rotation from a unit quaternion (w, x, y, z). The quaternion is normalized first.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Rotation {
        let n = math::sqrt(w * w + x * x + y * y + z * z);
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Rotation {
            m: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of RᵀR − I.
    pub fn orthonormality_error(&self) -> f64 {
        let rtr = self.transpose() * *self;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max(math::fabs(rtr.m[i][j] - target));
            }
        }
        worst
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
            && self.orthonormality_error() <= tol
            && math::fabs(self.determinant() - 1.0) <= tol
    }

    /// Geodesic angle to `other` in radians, in [0, π].
    pub fn geodesic(&self, other: &Rotation) -> f64 {
        rotation_geodesic(self, other)
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, o: Rotation) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Rotation { m }
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.apply(v)
    }
}

/// Rotation angle of aᵀb: arccos((tr(aᵀb) − 1)/2), clamped to [0, π].
pub fn rotation_geodesic(a: &Rotation, b: &Rotation) -> f64 {
    let c = ((a.transpose() * *b).trace() - 1.0) / 2.0;
    math::acos(c.clamp(-1.0, 1.0))
}

/// An element of SE(3): x ↦ R·x + b.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Rotation::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        RigidTransform::new(rotation, Vec3::ZERO)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        RigidTransform::new(Rotation::IDENTITY, translation)
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        compose(self, other)
    }

    pub fn inverse(&self) -> RigidTransform {
        invert(self)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, o: RigidTransform) -> RigidTransform {
        compose(&self, &o)
    }
}

/// (a∘b)(x) = a(b(x)).
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation.apply(b.translation) + a.translation,
    }
}

/// {Rᵀ, −Rᵀb}.
pub fn invert(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        rotation: rt,
        translation: -rt.apply(t.translation),
    }
}

/// An ordered set of points with optional integer tags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points, labels: None }
    }

    pub fn with_labels(points: Vec<Vec3>, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::ShapeMismatch {
                expected: points.len(),
                found: labels.len(),
            });
        }
        Ok(PointCloud {
            points,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<i64> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.is_finite())
    }

    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::ZERO;
        }
        let mut s = Vec3::ZERO;
        for p in &self.points {
            s += *p;
        }
        s / self.points.len() as f64
    }

    /// Keeps the points at `indices`, in the given order, carrying labels along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Same labels, new coordinates.
    pub fn map_points(&self, mut f: impl FnMut(Vec3) -> Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| f(p)).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Point i maps to R·xᵢ + b; order and labels are preserved.
pub fn apply_cloud(t: &RigidTransform, x: &PointCloud) -> PointCloud {
    x.map_points(|p| t.apply_point(p))
}

/// End-effector pose: position, orientation and gripper aperture.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
    pub gripper: f64,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation, gripper: f64) -> Self {
        Pose {
            position,
            orientation,
            gripper,
        }
    }
}

/// The gripper width is frame-free and passes through untouched.
pub fn apply_pose(t: &RigidTransform, p: &Pose) -> Pose {
    Pose {
        position: t.apply_point(p.position),
        orientation: t.rotation * p.orientation,
        gripper: p.gripper,
    }
}

/// Gram–Schmidt on two vectors; the result has columns [e1 e2 e1×e2].
pub fn frame_from_vectors(u1: Vec3, u2: Vec3) -> Result<Rotation> {
    if !(u1.norm() > FRAME_EPS) || !(u1.cross(u2).norm() > FRAME_EPS) {
        return Err(Error::DegenerateFrame);
    }
    let e1 = u1 / u1.norm();
    let e2 = (u2 - e1 * u2.dot(e1))
        .try_normalize(0.0)
        .ok_or(Error::DegenerateFrame)?;
    let e3 = e1.cross(e2);
    Ok(Rotation::from_columns(e1, e2, e3))
}

/// Uniform rotation on SO(3) from a normalized Gaussian quaternion.
pub fn random_rotation_with<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n2 = q.iter().map(|v| v * v).sum::<f64>();
        if n2 > 1e-12 {
            return Rotation::from_quaternion(q[0], q[1], q[2], q[3]);
        }
    }
}

/// Uniform rotation plus a translation uniform in the cube of half-width `translation_scale`.
pub fn random_transform_with<R: Rng + ?Sized>(rng: &mut R, translation_scale: f64) -> RigidTransform {
    let rotation = random_rotation_with(rng);
    let mut b = [0.0; 3];
    for v in &mut b {
        *v = if translation_scale > 0.0 {
            rng.random_range(-translation_scale..=translation_scale)
        } else {
            0.0
        };
    }
    RigidTransform::new(rotation, Vec3::from_array(b))
}

pub fn random_rotation(seed: u64) -> Rotation {
    random_rotation_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_transform(seed: u64, translation_scale: f64) -> RigidTransform {
    random_transform_with(&mut ChaCha8Rng::seed_from_u64(seed), translation_scale)
}
