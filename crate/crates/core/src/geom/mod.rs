//! Pinhole camera math, depth unprojection and z-buffered point splatting.

mod camera;
mod splat;

pub use camera::{geodesic_angle_deg, CameraIntrinsics, CameraPose, ROTATION_TOLERANCE};
pub use splat::{
    project_points, render_scaffold, splat_offsets, unproject_frame, ColoredPoint, ProjectedFrame, Splat,
};

use thiserror::Error;

use crate::clip::ClipError;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("invalid pose: {0}")]
    Pose(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("depth {value} at pixel ({u}, {v}) is not finite and positive")]
    Depth { u: usize, v: usize, value: f64 },
    #[error("trajectory length mismatch: {0}")]
    TrajectoryLength(String),
    #[error(transparent)]
    Clip(#[from] ClipError),
}
