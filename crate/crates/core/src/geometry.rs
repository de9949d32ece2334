//! Geometric value types and the generalized-camera data model.
//!
//! Everything downstream works in a single "rig" frame: rays carry their
//! pinhole position and unit direction in that frame, and every
//! [`PinholeCamera`] stores its pose relative to it.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` accepted by [`Rotation::new`].
pub const ROTATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth {depth} in the camera frame")]
    BehindCamera { depth: f64 },
    #[error("matrix is not a proper rotation (orthogonality error {ortho:e}, det {det})")]
    NotARotation { ortho: f64, det: f64 },
    #[error("ray direction has zero or non-finite length")]
    ZeroDirection,
    #[error("scale must be finite and positive, got {0}")]
    NonPositiveScale(f64),
    #[error("focal length must be finite and positive, got {0}")]
    NonPositiveFocal(f64),
    #[error("image size must be positive, got {0}x{1}")]
    EmptyImage(u32, u32),
    #[error("a generalized camera needs at least one pinhole camera")]
    EmptyRig,
    #[error("camera index {index} out of range for a rig of {len} cameras")]
    CameraIndex { index: usize, len: usize },
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
        let det = m.determinant();
        if !(ortho <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(GeometryError::NotARotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without checking it. Callers guarantee orthonormality.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in radians, computed from the skew and trace parts so
    /// it stays accurate near zero and near π.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let cos2 = m.trace() - 1.0;
        skew.norm().atan2(cos2)
    }

    /// Angle in radians of `self · otherᵀ`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        Rotation(self.0 * other.0.transpose()).angle()
    }
}

impl TryFrom<Mat3> for Rotation {
    type Error = GeometryError;
    fn try_from(m: Mat3) -> Result<Self, Self::Error> {
        Rotation::new(m)
    }
}

impl From<Rotation> for Mat3 {
    fn from(r: Rotation) -> Mat3 {
        r.0
    }
}

/// A half-line `origin + s * direction` with unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(Self { origin, direction: direction / n })
    }

    pub fn origin(&self) -> &Vec3 {
        &self.origin
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    pub fn point_at(&self, depth: f64) -> Vec3 {
        self.origin + self.direction * depth
    }

    /// Signed depth of the orthogonal projection of `point` onto the ray's line.
    pub fn depth_of(&self, point: &Vec3) -> f64 {
        self.direction.dot(&(point - self.origin))
    }

    /// Rigidly moves and rescales the ray by a similarity (`scale·R·x + t`).
    pub fn transformed(&self, t: &SimilarityTransform) -> Ray {
        Ray {
            origin: t.apply(&self.origin),
            direction: t.rotation.rotate(&self.direction),
        }
    }
}

/// `x ↦ scale · R · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Rotation, translation: Vec3) -> Result<Self, GeometryError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::NonPositiveScale(scale));
        }
        Ok(Self { scale, rotation, translation })
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation.rotate(x) * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rinv = self.rotation.inverse();
        let sinv = 1.0 / self.scale;
        Self {
            scale: sinv,
            rotation: rinv,
            translation: -(rinv.rotate(&self.translation) * sinv),
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &SimilarityTransform) -> Self {
        Self {
            scale: self.scale * first.scale,
            rotation: self.rotation.compose(&first.rotation),
            translation: self.apply(&first.translation),
        }
    }

    pub fn to_affine(&self) -> AffineTransform {
        AffineTransform {
            linear: self.rotation.matrix() * self.scale,
            translation: self.translation,
        }
    }
}

/// Free function form of [`SimilarityTransform::apply`].
pub fn apply_similarity(t: &SimilarityTransform, x: &Vec3) -> Vec3 {
    t.apply(x)
}

/// `x ↦ linear · x + translation`, with no orthogonality requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self { linear: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.linear * x + self.translation
    }
}

/// Anything that maps world points into the rig frame.
pub trait PointMap {
    fn map_point(&self, x: &Vec3) -> Vec3;
}

impl PointMap for SimilarityTransform {
    fn map_point(&self, x: &Vec3) -> Vec3 {
        self.apply(x)
    }
}

impl PointMap for AffineTransform {
    fn map_point(&self, x: &Vec3) -> Vec3 {
        self.apply(x)
    }
}

/// Pinhole camera posed in the rig frame.
///
/// `orientation` maps camera-frame vectors into the rig frame, so the optical
/// axis in the rig frame is the third column of its matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub center: Vec3,
    pub orientation: Rotation,
    focal_length: f64,
    image_width: u32,
    image_height: u32,
    principal_point: Vec2,
}

impl PinholeCamera {
    pub fn new(
        center: Vec3,
        orientation: Rotation,
        focal_length: f64,
        image_width: u32,
        image_height: u32,
        principal_point: Vec2,
    ) -> Result<Self, GeometryError> {
        if !(focal_length.is_finite() && focal_length > 0.0) {
            return Err(GeometryError::NonPositiveFocal(focal_length));
        }
        if image_width == 0 || image_height == 0 {
            return Err(GeometryError::EmptyImage(image_width, image_height));
        }
        Ok(Self { center, orientation, focal_length, image_width, image_height, principal_point })
    }

    /// Camera with its principal point at the image center.
    pub fn centered(
        center: Vec3,
        orientation: Rotation,
        focal_length: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let pp = Vec2::new(f64::from(image_width) / 2.0, f64::from(image_height) / 2.0);
        Self::new(center, orientation, focal_length, image_width, image_height, pp)
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.image_width, self.image_height)
    }

    pub fn principal_point(&self) -> &Vec2 {
        &self.principal_point
    }

    pub fn contains(&self, pixel: &Vec2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < f64::from(self.image_width)
            && pixel.y < f64::from(self.image_height)
    }

    /// Rig-frame point expressed in the camera frame.
    pub fn to_camera_frame(&self, point: &Vec3) -> Vec3 {
        self.orientation.matrix().tr_mul(&(point - self.center))
    }

    pub fn backproject(&self, pixel: &Vec2) -> Ray {
        let d = Vec3::new(
            (pixel.x - self.principal_point.x) / self.focal_length,
            (pixel.y - self.principal_point.y) / self.focal_length,
            1.0,
        );
        let direction = self.orientation.rotate(&d);
        let n = direction.norm();
        Ray { origin: self.center, direction: direction / n }
    }

    pub fn project(&self, point: &Vec3) -> Result<Vec2, GeometryError> {
        let pc = self.to_camera_frame(point);
        if !(pc.z > 0.0) {
            return Err(GeometryError::BehindCamera { depth: pc.z });
        }
        Ok(Vec2::new(
            self.focal_length * pc.x / pc.z + self.principal_point.x,
            self.focal_length * pc.y / pc.z + self.principal_point.y,
        ))
    }
}

pub fn backproject(camera: &PinholeCamera, pixel: &Vec2) -> Ray {
    camera.backproject(pixel)
}

pub fn project(camera: &PinholeCamera, point: &Vec3) -> Result<Vec2, GeometryError> {
    camera.project(point)
}

/// A rig of pinhole cameras treated as one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedCamera {
    cameras: Vec<PinholeCamera>,
}

impl GeneralizedCamera {
    pub fn new(cameras: Vec<PinholeCamera>) -> Result<Self, GeometryError> {
        if cameras.is_empty() {
            return Err(GeometryError::EmptyRig);
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[PinholeCamera] {
        &self.cameras
    }

    pub fn camera(&self, index: usize) -> Result<&PinholeCamera, GeometryError> {
        self.cameras
            .get(index)
            .ok_or(GeometryError::CameraIndex { index, len: self.cameras.len() })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// World point observed at `pixel` by camera `camera_index` of a rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world_point: Vec3,
    pub ray: Ray,
    pub camera_index: usize,
    pub pixel: Vec2,
}

impl Correspondence {
    /// Derives the ray by back-projecting `pixel` through the indexed camera.
    pub fn observe(
        rig: &GeneralizedCamera,
        camera_index: usize,
        world_point: Vec3,
        pixel: Vec2,
    ) -> Result<Self, GeometryError> {
        let ray = rig.camera(camera_index)?.backproject(&pixel);
        Ok(Self { world_point, ray, camera_index, pixel })
    }
}
