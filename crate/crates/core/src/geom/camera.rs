use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::GeomError;

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates,
/// `u` growing to the right and `v` growing downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeomError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center, horizontal focal
    /// length `focal_scale * width`.
    pub fn centered(width: usize, height: usize, focal_scale: f64) -> Result<Self, GeomError> {
        let f = focal_scale * width as f64;
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeomError::Intrinsics(format!(
                "focal lengths must be finite and positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::Intrinsics("image size must be nonzero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeomError::Intrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame point at depth `depth` along the ray through pixel `(u, v)`.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth)
    }

    /// Continuous pixel coordinates of a camera-frame point (no culling).
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Rigid world-to-camera transform: `X_cam = R * X_world + t`.
///
/// Camera axes follow the image: `+x` right, `+y` down, `+z` forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeomError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeomError::Pose("non-finite entry".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOLERANCE {
            return Err(GeomError::Pose(format!("rotation not orthonormal (max |R^T R - I| = {ortho:e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeomError::Pose(format!("rotation determinant {det} != +1")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose from a world-to-camera rotation and the camera center in world coordinates.
    pub fn from_rotation_center(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self, GeomError> {
        Self::new(rotation, -(rotation * center))
    }

    /// Camera at `eye` looking at `target`, with world `up` mapped to image-up.
    /// Falls back to `+x` as the up hint when the viewing direction is parallel to `up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self, GeomError> {
        let forward = target - eye;
        let norm = forward.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeomError::Pose("look-at target coincides with eye".into()));
        }
        let forward = forward / norm;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-12 {
            right = forward.cross(&Vector3::x());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::from_rotation_center(rotation, eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing direction (`+z` camera axis) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotates the camera in place about an axis expressed in camera coordinates,
    /// keeping the camera center fixed.
    pub fn rotated_in_camera(&self, axis: Vector3<f64>, degrees: f64) -> Result<CameraPose, GeomError> {
        let axis = Unit::try_new(axis, 1e-12).ok_or_else(|| GeomError::Pose("zero rotation axis".into()))?;
        let delta = Rotation3::from_axis_angle(&axis, degrees.to_radians());
        CameraPose::from_rotation_center(delta.matrix() * self.rotation, self.center())
    }

    /// Geodesic angle in degrees between the two rotations, `arccos((tr(R_a R_b^T) - 1) / 2)`.
    pub fn rotation_angle_deg(&self, other: &CameraPose) -> f64 {
        geodesic_angle_deg(&self.rotation, &other.rotation)
    }

    /// Row-major `R | t` as 12 numbers.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Result<Self, GeomError> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(rotation, Vector3::new(v[3], v[7], v[11]))
    }
}

pub fn geodesic_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let cos = (((a * b.transpose()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, -0.1, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 3.9, 4, 4).is_ok());
    }

    #[test]
    fn pose_rejects_reflection_and_skew() {
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraPose::new(reflect, Vector3::zeros()).is_err());
        let mut skew = Matrix3::identity();
        skew[(0, 1)] = 1e-6;
        assert!(CameraPose::new(skew, Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_points_forward_at_target() {
        let eye = Vector3::new(1.0, 2.0, -3.0);
        let target = Vector3::new(0.0, 0.5, 4.0);
        let pose = CameraPose::look_at(eye, target, Vector3::y()).unwrap();
        let cam = pose.world_to_camera(&target);
        assert_abs_diff_eq!(cam.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cam.y, 0.0, epsilon = 1e-12);
        assert!(cam.z > 0.0);
        assert_abs_diff_eq!((pose.center() - eye).norm(), 0.0, epsilon = 1e-12);
        // World up appears upward in the image (negative camera y).
        let above = pose.world_to_camera(&(target + Vector3::y()));
        assert!(above.y < 0.0);
    }

    #[test]
    fn look_at_falls_back_when_parallel_to_up() {
        let pose = CameraPose::look_at(Vector3::zeros(), Vector3::new(0.0, 5.0, 0.0), Vector3::y()).unwrap();
        assert_abs_diff_eq!((pose.forward() - Vector3::y()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = CameraPose::look_at(Vector3::new(0.3, 0.1, -2.0), Vector3::zeros(), Vector3::y()).unwrap();
        let b = CameraPose::look_at(Vector3::new(-1.0, 0.4, 0.5), Vector3::new(0.2, 0.0, 3.0), Vector3::y()).unwrap();
        let p = Vector3::new(0.7, -0.2, 1.9);
        let seq = a.world_to_camera(&b.world_to_camera(&p));
        let comp = a.compose(&b).world_to_camera(&p);
        assert_abs_diff_eq!((seq - comp).norm(), 0.0, epsilon = 1e-12);
        let round = a.inverse().compose(&a);
        assert_abs_diff_eq!((round.rotation() - Matrix3::identity()).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn geodesic_angle_of_axis_rotations() {
        let id = CameraPose::identity();
        let r90 = id.rotated_in_camera(Vector3::new(1.0, 1.0, 0.0), 90.0).unwrap();
        assert_abs_diff_eq!(id.rotation_angle_deg(&r90), 90.0, epsilon = 1e-9);
        let r180 = id.rotated_in_camera(Vector3::z(), 180.0).unwrap();
        assert_abs_diff_eq!(id.rotation_angle_deg(&r180), 180.0, epsilon = 1e-6);
    }

    #[test]
    fn row_major_round_trip() {
        let pose = CameraPose::look_at(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros(), Vector3::y()).unwrap();
        let back = CameraPose::from_row_major(&pose.to_row_major()).unwrap();
        assert_eq!(pose, back);
    }
}
