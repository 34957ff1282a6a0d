//! Parametric camera trajectories: orbits, straight translations, dollies and
//! their concatenations, plus magnitude scaling for motion sweeps.

use std::fmt::Write as _;

use nalgebra::{Rotation3, Unit, Vector3};
use thiserror::Error;

use crate::geom::{CameraPose, GeomError};

/// Junction tolerance for [`compose`].
pub const CONTINUITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("trajectory needs at least one frame")]
    Empty,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid orbit: {0}")]
    Orbit(String),
    #[error("junction discontinuity: max deviation {deviation:e} exceeds {CONTINUITY_TOLERANCE:e}")]
    Discontinuous { deviation: f64 },
    #[error("trajectory is not from a parametric family and cannot be rescaled")]
    NonParametric,
    #[error("scale factor {0} must be finite and >= 0")]
    Factor(f64),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// How a trajectory was generated; needed to rescale its motion magnitude.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Orbit(OrbitSpec),
    Translate { start: CameraPose, offset: Vector3<f64> },
    /// Translation along the start pose's viewing direction.
    Dolly { start: CameraPose, distance: f64 },
    Composite,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSpec {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub total_degrees: f64,
    pub axis: Vector3<f64>,
    /// Direction from `center` to the first camera; projected onto the plane
    /// orthogonal to `axis`.
    pub start_direction: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<CameraPose>,
    family: Family,
}

impl Trajectory {
    pub fn from_poses(poses: Vec<CameraPose>) -> Result<Self, TrajError> {
        if poses.is_empty() {
            return Err(TrajError::Empty);
        }
        Ok(Self {
            poses,
            family: Family::Explicit,
        })
    }

    pub fn constant(pose: CameraPose, n_frames: usize) -> Result<Self, TrajError> {
        translate_path(pose, Vector3::zeros(), n_frames)
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first(&self) -> &CameraPose {
        &self.poses[0]
    }

    pub fn last(&self) -> &CameraPose {
        &self.poses[self.poses.len() - 1]
    }

    /// Plain-text form: a `#` header, then one line of 12 numbers per frame
    /// (row-major `R | t`, world-to-camera).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# mocam trajectory v1\n");
        let _ = writeln!(s, "# frames {}", self.poses.len());
        s.push_str("# r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2 (world-to-camera)\n");
        for pose in &self.poses {
            let row: Vec<String> = pose.to_row_major().iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TrajError> {
        let mut poses = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TrajError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let row: [f64; 12] = values.try_into().map_err(|v: Vec<f64>| TrajError::Parse {
                line: i + 1,
                message: format!("expected 12 numbers, found {}", v.len()),
            })?;
            poses.push(CameraPose::from_row_major(&row).map_err(|e| TrajError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_poses(poses)
    }
}

fn lerp_fraction(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

fn finite3(v: &Vector3<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Cameras sweeping `total_degrees` about `axis` through `center`, each looking at
/// `center`. Frame 0 sits at `center - radius * z` (projected off the axis).
pub fn orbit(
    center: Vector3<f64>,
    radius: f64,
    total_degrees: f64,
    axis: Vector3<f64>,
    n_frames: usize,
) -> Result<Trajectory, TrajError> {
    orbit_with(
        OrbitSpec {
            center,
            radius,
            total_degrees,
            axis,
            start_direction: -Vector3::z(),
        },
        n_frames,
    )
}

/// Orbit starting from the camera at `eye`; the radius is the distance from
/// `eye` to the axis through `center`.
pub fn orbit_from_eye(
    center: Vector3<f64>,
    eye: Vector3<f64>,
    total_degrees: f64,
    axis: Vector3<f64>,
    n_frames: usize,
) -> Result<Trajectory, TrajError> {
    let offset = eye - center;
    let a = axis.try_normalize(1e-12).ok_or_else(|| TrajError::Orbit("zero axis".into()))?;
    let radius = (offset - a * a.dot(&offset)).norm();
    orbit_with(
        OrbitSpec {
            center,
            radius,
            total_degrees,
            axis,
            start_direction: offset,
        },
        n_frames,
    )
}

pub fn orbit_with(spec: OrbitSpec, n_frames: usize) -> Result<Trajectory, TrajError> {
    if n_frames == 0 {
        return Err(TrajError::Empty);
    }
    if !finite3(&spec.center)
        || !finite3(&spec.axis)
        || !finite3(&spec.start_direction)
        || !spec.radius.is_finite()
        || !spec.total_degrees.is_finite()
    {
        return Err(TrajError::NonFinite("orbit parameters"));
    }
    if spec.radius <= 0.0 {
        return Err(TrajError::Orbit(format!("radius {} must be positive", spec.radius)));
    }
    let norm = spec.axis.norm();
    if norm == 0.0 {
        return Err(TrajError::Orbit("zero axis".into()));
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(TrajError::Orbit(format!("axis norm {norm} is not 1")));
    }
    let axis = Unit::new_unchecked(spec.axis);
    let mut d0 = spec.start_direction - axis.as_ref() * axis.dot(&spec.start_direction);
    if d0.norm() < 1e-12 {
        let fallback = -Vector3::x();
        d0 = fallback - axis.as_ref() * axis.dot(&fallback);
    }
    let d0 = d0.normalize() * spec.radius;
    let poses = (0..n_frames)
        .map(|k| {
            let angle = (spec.total_degrees * lerp_fraction(k, n_frames)).to_radians();
            let eye = spec.center + Rotation3::from_axis_angle(&axis, angle) * d0;
            CameraPose::look_at(eye, spec.center, Vector3::y())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        poses,
        family: Family::Orbit(spec),
    })
}

/// Camera centers move linearly from the start center to `start + offset`;
/// the rotation is held fixed.
pub fn translate_path(start_pose: CameraPose, offset: Vector3<f64>, n_frames: usize) -> Result<Trajectory, TrajError> {
    if n_frames == 0 {
        return Err(TrajError::Empty);
    }
    if !finite3(&offset) {
        return Err(TrajError::NonFinite("offset"));
    }
    let poses = linear_centers(&start_pose, offset, n_frames)?;
    Ok(Trajectory {
        poses,
        family: Family::Translate {
            start: start_pose,
            offset,
        },
    })
}

/// Moves the camera `distance` along its viewing direction (negative backs away).
pub fn dolly(start_pose: CameraPose, distance: f64, n_frames: usize) -> Result<Trajectory, TrajError> {
    if n_frames == 0 {
        return Err(TrajError::Empty);
    }
    if !distance.is_finite() {
        return Err(TrajError::NonFinite("dolly distance"));
    }
    let poses = linear_centers(&start_pose, start_pose.forward() * distance, n_frames)?;
    Ok(Trajectory {
        poses,
        family: Family::Dolly {
            start: start_pose,
            distance,
        },
    })
}

fn linear_centers(start: &CameraPose, offset: Vector3<f64>, n: usize) -> Result<Vec<CameraPose>, TrajError> {
    let r = start.rotation();
    (0..n)
        .map(|k| {
            // t_k = t_0 - R * Δc keeps zero offsets bit-exact.
            let t = start.translation() - r * (offset * lerp_fraction(k, n));
            Ok(CameraPose::new(*r, t)?)
        })
        .collect()
}

fn pose_deviation(a: &CameraPose, b: &CameraPose) -> f64 {
    let r = (a.rotation() - b.rotation()).amax();
    let t = (a.translation() - b.translation()).amax();
    r.max(t)
}

/// Concatenates `b` after `a`, dropping `b`'s first pose (which must match `a`'s last).
pub fn compose(a: &Trajectory, b: &Trajectory) -> Result<Trajectory, TrajError> {
    let deviation = pose_deviation(a.last(), b.first());
    if deviation.is_nan() || deviation > CONTINUITY_TOLERANCE {
        return Err(TrajError::Discontinuous { deviation });
    }
    let mut poses = a.poses.clone();
    poses.extend_from_slice(&b.poses[1..]);
    Ok(Trajectory {
        poses,
        family: Family::Composite,
    })
}

/// Scales the orbit angle, translation offset or dolly distance by `factor`,
/// keeping the frame count.
pub fn scale_magnitude(t: &Trajectory, factor: f64) -> Result<Trajectory, TrajError> {
    if !factor.is_finite() || factor < 0.0 {
        return Err(TrajError::Factor(factor));
    }
    let n = t.len();
    match &t.family {
        Family::Orbit(spec) => orbit_with(
            OrbitSpec {
                total_degrees: spec.total_degrees * factor,
                ..*spec
            },
            n,
        ),
        Family::Translate { start, offset } => translate_path(*start, offset * factor, n),
        Family::Dolly { start, distance } => dolly(*start, distance * factor, n),
        Family::Composite | Family::Explicit => Err(TrajError::NonParametric),
    }
}

/// Frame counts for a two-part composite of total length `n` (junction shared).
pub fn split_frames(n: usize) -> (usize, usize) {
    let first = (n + 2) / 2;
    (first, n + 1 - first)
}
