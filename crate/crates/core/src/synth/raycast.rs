use nalgebra::Vector3;

use super::scene::{Primitive, Scene, Shape, ROOM_MAX, ROOM_MIN};
use super::SynthError;
use crate::clip::{DepthClip, VideoClip};
use crate::geom::{CameraIntrinsics, CameraPose};
use crate::traj::Trajectory;

const EPS: f64 = 1e-9;

/// Ray-sphere hit; the ray is `o + λ d` with `d` not necessarily unit.
fn hit_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.dot(d);
    let b = 2.0 * d.dot(&oc);
    let cc = oc.dot(&oc) - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let near = (-b - s) / (2.0 * a);
    if near > EPS {
        return Some(near);
    }
    let far = (-b + s) / (2.0 * a);
    (far > EPS).then_some(far)
}

fn hit_box(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, h: &[f64; 3]) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let lo = c[a] - h[a];
        let hi = c[a] + h[a];
        if d[a] == 0.0 {
            if o[a] < lo || o[a] > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (ta, tb) = ((lo - o[a]) * inv, (hi - o[a]) * inv);
        let (ta, tb) = if ta < tb { (ta, tb) } else { (tb, ta) };
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    if t0 > EPS {
        Some(t0)
    } else if t1 > EPS {
        Some(t1)
    } else {
        None
    }
}

fn hit_panel(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, hw: f64, hh: f64) -> Option<f64> {
    if d.z == 0.0 {
        return None;
    }
    let t = (c.z - o.z) / d.z;
    if t <= EPS {
        return None;
    }
    let p = o + d * t;
    ((p.x - c.x).abs() <= hw && (p.y - c.y).abs() <= hh).then_some(t)
}

/// Exit point of the room box; `o` must be inside. Returns `(λ, wall index)`
/// with walls ordered floor, ceiling, -x, +x, -z, +z.
fn hit_room(o: &Vector3<f64>, d: &Vector3<f64>) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for a in 0..3 {
        let (t, wall) = if d[a] > 0.0 {
            ((ROOM_MAX[a] - o[a]) / d[a], 2 * a + 1)
        } else if d[a] < 0.0 {
            ((ROOM_MIN[a] - o[a]) / d[a], 2 * a)
        } else {
            continue;
        };
        if t < best.0 {
            best = (t, wall);
        }
    }
    best
}

fn room_color(scene: &Scene, wall: usize, p: &Vector3<f64>) -> [f64; 3] {
    let bg = &scene.background;
    // In-plane coordinates only, so the constant coordinate never flips a pattern.
    match wall {
        0 => bg.floor.sample([p.x, 0.5, p.z]),
        1 => bg.ceiling.sample([p.x, 0.5, p.z]),
        2 => bg.walls[0].sample([0.5, p.y, p.z]),
        3 => bg.walls[1].sample([0.5, p.y, p.z]),
        4 => bg.walls[2].sample([p.x, p.y, 0.5]),
        _ => bg.walls[3].sample([p.x, p.y, 0.5]),
    }
}

fn primitive_hit(p: &Primitive, frame: usize, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let c = p.center(frame);
    match p.shape {
        Shape::Sphere { radius } => hit_sphere(o, d, &c, radius),
        Shape::Cuboid { ref half_extents } => hit_box(o, d, &c, half_extents),
        Shape::Panel {
            half_width,
            half_height,
        } => hit_panel(o, d, &c, half_width, half_height),
    }
}

fn primitive_color(p: &Primitive, frame: usize, x: &Vector3<f64>) -> [f64; 3] {
    let local = x - p.center(frame);
    match p.shape {
        Shape::Panel { .. } => p.texture.sample([local.x, local.y, 0.5]),
        // Phase offset keeps pattern boundaries off the faces of the primitive.
        _ => p.texture.sample([local.x + 0.137, local.y + 0.291, local.z + 0.173]),
    }
}

/// Color and camera depth of the first surface along the ray through pixel `(u, v)`.
pub fn trace_pixel(scene: &Scene, pose: &CameraPose, k: &CameraIntrinsics, frame: usize, u: f64, v: f64) -> ([f64; 3], f64) {
    let o = pose.center();
    // Camera-frame direction has unit z, so λ equals camera depth.
    let d = pose.rotation().transpose() * k.backproject(u, v, 1.0);
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some(t) = primitive_hit(p, frame, &o, &d) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    let (room_t, wall) = hit_room(&o, &d);
    match best {
        Some((t, i)) if t < room_t => (primitive_color(&scene.primitives[i], frame, &(o + d * t)), t),
        _ => (room_color(scene, wall, &(o + d * room_t)), room_t),
    }
}

/// Exact ray-cast render of frame `frame_index`: `H x W x 3` colors and
/// `H x W` depth along the optical axis.
pub fn render_view(
    scene: &Scene,
    pose: &CameraPose,
    k: &CameraIntrinsics,
    frame_index: usize,
) -> Result<(Vec<f64>, Vec<f64>), SynthError> {
    if frame_index >= scene.n_frames {
        return Err(SynthError::FrameIndex {
            index: frame_index,
            frames: scene.n_frames,
        });
    }
    let mut color = Vec::with_capacity(k.pixels() * 3);
    let mut depth = Vec::with_capacity(k.pixels());
    for v in 0..k.height {
        for u in 0..k.width {
            let (c, z) = trace_pixel(scene, pose, k, frame_index, u as f64, v as f64);
            color.extend_from_slice(&c);
            depth.push(z);
        }
    }
    Ok((color, depth))
}

/// Renders frame `i` of the scene from pose `i` of the trajectory.
pub fn render_clip(scene: &Scene, traj: &Trajectory, k: &CameraIntrinsics) -> Result<(VideoClip, DepthClip), SynthError> {
    if traj.len() != scene.n_frames {
        return Err(SynthError::Length(format!(
            "trajectory has {} poses, scene has {} frames",
            traj.len(),
            scene.n_frames
        )));
    }
    let mut frames = Vec::with_capacity(traj.len());
    let mut depths = Vec::with_capacity(traj.len());
    for (i, pose) in traj.poses().iter().enumerate() {
        let (c, d) = render_view(scene, pose, k, i)?;
        frames.push(c);
        depths.push(d);
    }
    Ok((
        VideoClip::from_frames(k.height, k.width, frames)?,
        DepthClip::from_frames(k.height, k.width, depths)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::scene::{gen_scene, Background, Complexity, Texture, SCENE_SCHEMA};
    use super::*;
    use crate::geom::{project_points, unproject_frame, Splat};
    use approx::assert_abs_diff_eq;

    fn gray() -> Texture {
        Texture::Flat { color: [0.5; 3] }
    }

    fn single_sphere_scene() -> Scene {
        Scene {
            schema: SCENE_SCHEMA.into(),
            seed: 0,
            n_frames: 1,
            complexity: Complexity::Small,
            primitives: vec![Primitive {
                shape: Shape::Sphere { radius: 1.0 },
                start: [0.0, 0.0, 5.0],
                velocity: [0.0; 3],
                texture: Texture::Flat { color: [1.0, 0.0, 0.0] },
            }],
            background: Background {
                floor: gray(),
                ceiling: gray(),
                walls: [gray(); 4],
            },
        }
    }

    /// Distance from `x` to the nearest surface, evaluated analytically.
    fn surface_distance(scene: &Scene, frame: usize, x: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..3 {
            best = best.min((x[a] - ROOM_MIN[a]).abs()).min((x[a] - ROOM_MAX[a]).abs());
        }
        for p in &scene.primitives {
            let l = x - p.center(frame);
            let dist = match p.shape {
                Shape::Sphere { radius } => (l.norm() - radius).abs(),
                Shape::Cuboid { half_extents } => {
                    let q = l.abs() - Vector3::from(half_extents);
                    let outside = q.map(|v| v.max(0.0)).norm();
                    (outside + q.max().min(0.0)).abs()
                }
                Shape::Panel {
                    half_width,
                    half_height,
                } => {
                    let dx = (l.x.abs() - half_width).max(0.0);
                    let dy = (l.y.abs() - half_height).max(0.0);
                    (dx * dx + dy * dy + l.z * l.z).sqrt()
                }
            };
            best = best.min(dist);
        }
        best
    }

    #[test]
    fn sphere_on_axis_depth() {
        let scene = single_sphere_scene();
        let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 33, 33).unwrap();
        let (color, depth) = render_view(&scene, &CameraPose::identity(), &k, 0).unwrap();
        let i = 16 * 33 + 16;
        assert_abs_diff_eq!(depth[i], 4.0, epsilon = 1e-12);
        assert_eq!(&color[3 * i..3 * i + 3], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn deterministic_and_always_finite() {
        let scene = gen_scene(11, 4, Complexity::Medium).unwrap();
        let k = CameraIntrinsics::centered(32, 32, 1.0).unwrap();
        let pose = CameraPose::look_at(Vector3::new(3.0, 1.2, 1.0), Vector3::new(0.0, 1.0, 4.0), Vector3::y()).unwrap();
        let a = render_view(&scene, &pose, &k, 2).unwrap();
        let b = render_view(&scene, &pose, &k, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.1.iter().all(|d| d.is_finite() && *d > 0.0));
        assert!(matches!(render_view(&scene, &pose, &k, 4), Err(SynthError::FrameIndex { .. })));
    }

    #[test]
    fn depth_lands_on_surfaces() {
        let k = CameraIntrinsics::centered(24, 24, 1.0).unwrap();
        for seed in 0..5 {
            let scene = gen_scene(seed, 3, Complexity::Medium).unwrap();
            let pose = CameraPose::look_at(Vector3::new(-1.0, 1.5, 0.5), Vector3::new(0.0, 1.0, 4.0), Vector3::y()).unwrap();
            let (_, depth) = render_view(&scene, &pose, &k, 1).unwrap();
            for v in 0..k.height {
                for u in 0..k.width {
                    let d = depth[v * k.width + u];
                    let x = pose.camera_to_world(&k.backproject(u as f64, v as f64, d));
                    assert!(surface_distance(&scene, 1, &x) < 1e-6);
                    assert_abs_diff_eq!(pose.world_to_camera(&x).z, d, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn reprojection_at_same_pose_reproduces_frame() {
        let scene = gen_scene(5, 2, Complexity::Medium).unwrap();
        let k = CameraIntrinsics::centered(32, 32, 1.0).unwrap();
        let pose = CameraPose::look_at(Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 1.0, 4.0), Vector3::y()).unwrap();
        let (color, depth) = render_view(&scene, &pose, &k, 1).unwrap();
        let cloud = unproject_frame(&color, &depth, &k, &pose).unwrap();
        let out = project_points(&cloud, &pose, &k, Splat::Nearest);
        for i in 0..k.pixels() {
            if out.valid[i] {
                for c in 0..3 {
                    assert!((out.color[3 * i + c] - color[3 * i + c]).abs() <= 1.0 / 255.0);
                }
            }
        }
        assert!(out.valid.iter().all(|v| *v));
    }
}
