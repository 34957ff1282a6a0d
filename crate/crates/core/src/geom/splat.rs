use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, CameraPose, GeomError};
use crate::clip::{DepthClip, ScaffoldClip, VideoClip};
use crate::traj::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub position: Vector3<f64>,
    pub color: [f64; 3],
}

/// Footprint of a projected point on the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splat {
    /// Nearest pixel only (radius 0).
    #[default]
    Nearest,
    /// Nearest pixel plus its 4-neighbourhood (integer offsets with `dx² + dy² <= 1`).
    Disk,
}

/// Integer pixel offsets covered by a splat around the nearest pixel.
pub fn splat_offsets(splat: Splat) -> &'static [(i64, i64)] {
    match splat {
        Splat::Nearest => &[(0, 0)],
        Splat::Disk => &[(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)],
    }
}

/// Lifts every pixel of one frame into world space.
///
/// Pixel `(u, v)` with depth `d` becomes `((u-cx)/fx*d, (v-cy)/fy*d, d)` in the
/// camera frame and is then mapped through the inverse of `source_pose`.
/// Points are emitted in row-major pixel order.
pub fn unproject_frame(
    frame: &[f64],
    depth: &[f64],
    k: &CameraIntrinsics,
    source_pose: &CameraPose,
) -> Result<Vec<ColoredPoint>, GeomError> {
    let pixels = k.pixels();
    if frame.len() != pixels * 3 || depth.len() != pixels {
        return Err(GeomError::Dimensions(format!(
            "frame has {} values and depth {} but intrinsics describe {}x{}",
            frame.len(),
            depth.len(),
            k.width,
            k.height
        )));
    }
    let mut points = Vec::with_capacity(pixels);
    for v in 0..k.height {
        for u in 0..k.width {
            let i = v * k.width + u;
            let d = depth[i];
            if !d.is_finite() || d <= 0.0 {
                return Err(GeomError::Depth { u, v, value: d });
            }
            let cam = k.backproject(u as f64, v as f64, d);
            points.push(ColoredPoint {
                position: source_pose.camera_to_world(&cam),
                color: [frame[3 * i], frame[3 * i + 1], frame[3 * i + 2]],
            });
        }
    }
    Ok(points)
}

/// One rendered scaffold frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFrame {
    pub color: Vec<f64>,
    pub valid: Vec<bool>,
    pub zbuffer: Vec<f64>,
    pub splatted: usize,
    pub culled: usize,
}

/// Z-buffered splat of `points` into the view `pose`.
///
/// A point is culled when its camera depth is not positive or when none of its
/// splat pixels fall inside the image. On equal depth the earlier point wins.
pub fn project_points(
    points: &[ColoredPoint],
    pose: &CameraPose,
    k: &CameraIntrinsics,
    splat: Splat,
) -> ProjectedFrame {
    let (w, h) = (k.width as i64, k.height as i64);
    let mut color = vec![0.0; k.pixels() * 3];
    let mut zbuffer = vec![f64::INFINITY; k.pixels()];
    let mut culled = 0;
    let offsets = splat_offsets(splat);
    for p in points {
        let cam = pose.world_to_camera(&p.position);
        if !(cam.z > 0.0) {
            culled += 1;
            continue;
        }
        let (u, v) = k.project(&cam);
        if !u.is_finite() || !v.is_finite() {
            culled += 1;
            continue;
        }
        let (pu, pv) = ((u + 0.5).floor(), (v + 0.5).floor());
        // Far outside the image: skip before casting to integers.
        if pu < -2.0 || pv < -2.0 || pu > (w + 1) as f64 || pv > (h + 1) as f64 {
            culled += 1;
            continue;
        }
        let (pu, pv) = (pu as i64, pv as i64);
        let mut hit = false;
        for &(dx, dy) in offsets {
            let (x, y) = (pu + dx, pv + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            hit = true;
            let i = (y * w + x) as usize;
            if cam.z < zbuffer[i] {
                zbuffer[i] = cam.z;
                color[3 * i..3 * i + 3].copy_from_slice(&p.color);
            }
        }
        if !hit {
            culled += 1;
        }
    }
    let valid = zbuffer.iter().map(|z| z.is_finite()).collect();
    ProjectedFrame {
        color,
        valid,
        zbuffer,
        splatted: points.len() - culled,
        culled,
    }
}

/// Re-renders each source frame's point cloud into the matching target frame.
pub fn render_scaffold(
    src: &VideoClip,
    depth: &DepthClip,
    k: &CameraIntrinsics,
    src_traj: &Trajectory,
    tgt_traj: &Trajectory,
    splat: Splat,
) -> Result<ScaffoldClip, GeomError> {
    let n = src.frames();
    if depth.frames() != n || src_traj.len() != n || tgt_traj.len() != n {
        return Err(GeomError::TrajectoryLength(format!(
            "source {n} frames, depth {}, source trajectory {}, target trajectory {}",
            depth.frames(),
            src_traj.len(),
            tgt_traj.len()
        )));
    }
    if src.width() != k.width || src.height() != k.height || depth.width() != k.width || depth.height() != k.height
    {
        return Err(GeomError::Dimensions(format!(
            "clip {}x{} / depth {}x{} vs intrinsics {}x{}",
            src.width(),
            src.height(),
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    let frames: Vec<ProjectedFrame> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cloud = unproject_frame(src.frame(i), depth.frame(i), k, &src_traj.poses()[i])?;
            Ok(project_points(&cloud, &tgt_traj.poses()[i], k, splat))
        })
        .collect::<Result<_, GeomError>>()?;
    let mut color = Vec::with_capacity(n * k.pixels() * 3);
    let mut validity = Vec::with_capacity(n * k.pixels());
    let mut zbuffer = Vec::with_capacity(n * k.pixels());
    for f in frames {
        color.extend(f.color);
        validity.extend(f.valid);
        zbuffer.extend(f.zbuffer);
    }
    Ok(ScaffoldClip {
        frames: VideoClip::new(n, k.height, k.width, color)?,
        validity,
        zbuffer,
    })
}
