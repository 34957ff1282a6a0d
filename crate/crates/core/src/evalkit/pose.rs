//! Camera-pose recovery by exhaustive photometric search, and pose errors.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geom::{geodesic_angle_deg, CameraIntrinsics, CameraPose};
use crate::synth::{render_view, Scene};
use crate::traj::Trajectory;

/// Candidate offsets around a reference pose: yaw about the camera's vertical
/// axis, and camera-center shifts along each world axis separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseGridSpec {
    pub max_degrees: f64,
    pub degree_step: f64,
    pub max_offset: f64,
    pub offset_step: f64,
}

impl Default for PoseGridSpec {
    fn default() -> Self {
        Self {
            max_degrees: 10.0,
            degree_step: 1.0,
            max_offset: 0.5,
            offset_step: 0.1,
        }
    }
}

fn symmetric_steps(max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(max >= 0.0) {
        return vec![0.0];
    }
    let n = (max / step + 1e-9).floor() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

impl PoseGridSpec {
    /// Grid order: yaw outer, then the zero shift followed by x, y and z shifts.
    pub fn candidates(&self, reference: &CameraPose) -> Result<Vec<CameraPose>, EvalError> {
        let mut shifts = vec![Vector3::zeros()];
        for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
            for s in symmetric_steps(self.max_offset, self.offset_step) {
                if s != 0.0 {
                    shifts.push(axis * s);
                }
            }
        }
        let mut out = Vec::new();
        for deg in symmetric_steps(self.max_degrees, self.degree_step) {
            let rotated = reference.rotated_in_camera(Vector3::y(), deg)?;
            for shift in &shifts {
                out.push(CameraPose::from_rotation_center(*rotated.rotation(), rotated.center() + shift)?);
            }
        }
        Ok(out)
    }
}

/// The candidate whose ground-truth render is closest (MSE) to `frame`; the
/// first one wins ties.
pub fn estimate_pose(
    frame: &[f64],
    scene: &Scene,
    frame_index: usize,
    k: &CameraIntrinsics,
    candidates: &[CameraPose],
) -> Result<CameraPose, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if frame.len() != k.pixels() * 3 {
        return Err(EvalError::Shape(format!(
            "frame has {} values, intrinsics need {}",
            frame.len(),
            k.pixels() * 3
        )));
    }
    let mut best = (f64::INFINITY, 0usize);
    for (i, pose) in candidates.iter().enumerate() {
        let (render, _) = render_view(scene, pose, k, frame_index)?;
        let err: f64 = render.iter().zip(frame).map(|(a, b)| (a - b).powi(2)).sum();
        if err < best.0 {
            best = (err, i);
        }
    }
    Ok(candidates[best.1])
}

/// Mean geodesic rotation error (degrees) and mean camera-center distance.
pub fn pose_errors(estimated: &Trajectory, target: &Trajectory) -> Result<(f64, f64), EvalError> {
    if estimated.len() != target.len() {
        return Err(EvalError::Shape(format!(
            "trajectory lengths {} and {}",
            estimated.len(),
            target.len()
        )));
    }
    let n = target.len() as f64;
    let (mut rot, mut trans) = (0.0, 0.0);
    for (e, t) in estimated.poses().iter().zip(target.poses()) {
        rot += geodesic_angle_deg(e.rotation(), t.rotation());
        trans += (e.center() - t.center()).norm();
    }
    Ok((rot / n, trans / n))
}
