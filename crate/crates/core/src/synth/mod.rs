//! Procedural dynamic scenes with analytic geometry, exact ground-truth
//! renders, and `(source, scaffold, target)` training triples.

mod raycast;
mod scene;

pub use raycast::{render_clip, render_view, trace_pixel};
pub use scene::{
    gen_scene, Background, Complexity, Primitive, Scene, Shape, Texture, ROOM_MAX, ROOM_MIN, SCENE_CENTER,
    SCENE_SCHEMA, SOURCE_EYE,
};

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip::{ClipError, DepthClip, ScaffoldClip, VideoClip};
use crate::geom::{render_scaffold, CameraIntrinsics, CameraPose, GeomError, Splat};
use crate::traj::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("scene needs at least one frame")]
    NoFrames,
    #[error("frame index {index} out of range for {frames} frames")]
    FrameIndex { index: usize, frames: usize },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("scene parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Clip(#[from] ClipError),
}

/// Default source camera: at [`SOURCE_EYE`] looking at [`SCENE_CENTER`].
pub fn default_source_pose() -> CameraPose {
    CameraPose::look_at(Vector3::from(SOURCE_EYE), Vector3::from(SCENE_CENTER), Vector3::y())
        .expect("default source pose is valid")
}

/// A reference clip, its re-rendered scaffold, and the ground-truth target clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriple {
    pub source: VideoClip,
    pub source_depth: DepthClip,
    pub source_traj: Trajectory,
    pub scaffold: ScaffoldClip,
    pub target: VideoClip,
    pub target_traj: Trajectory,
}

impl TrainingTriple {
    /// Rebuilds the scaffold from a different (e.g. perturbed) source depth.
    pub fn with_source_depth(&self, depth: DepthClip, k: &CameraIntrinsics, splat: Splat) -> Result<Self, SynthError> {
        let scaffold = render_scaffold(&self.source, &depth, k, &self.source_traj, &self.target_traj, splat)?;
        Ok(Self {
            source_depth: depth,
            scaffold,
            ..self.clone()
        })
    }
}

pub fn make_triple(
    scene: &Scene,
    src_traj: &Trajectory,
    tgt_traj: &Trajectory,
    k: &CameraIntrinsics,
    splat: Splat,
) -> Result<TrainingTriple, SynthError> {
    if src_traj.len() != scene.n_frames || tgt_traj.len() != scene.n_frames {
        return Err(SynthError::Length(format!(
            "scene has {} frames, source trajectory {}, target trajectory {}",
            scene.n_frames,
            src_traj.len(),
            tgt_traj.len()
        )));
    }
    let (source, source_depth) = render_clip(scene, src_traj, k)?;
    let (target, _) = render_clip(scene, tgt_traj, k)?;
    let scaffold = render_scaffold(&source, &source_depth, k, src_traj, tgt_traj, splat)?;
    Ok(TrainingTriple {
        source,
        source_depth,
        source_traj: src_traj.clone(),
        scaffold,
        target,
        target_traj: tgt_traj.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthNoise {
    /// `d * (1 + ε)`, `ε ~ N(0, strength²)` clipped to `ε >= -0.9`.
    MultiplicativeNoise,
    /// Rounds depth to multiples of `strength` world units (never below one step).
    Quantize,
    /// `d * (1 + strength * s)` with `s` a smooth seeded field in `[-1, 1]`.
    SmoothBias,
}

/// Seeded depth corruption for robustness tests. `strength == 0` returns the input.
pub fn perturb_depth(depth: &DepthClip, mode: DepthNoise, strength: f64, seed: u64) -> Result<DepthClip, SynthError> {
    if strength == 0.0 {
        return Ok(depth.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (depth.height(), depth.width());
    let data: Vec<f64> = match mode {
        DepthNoise::MultiplicativeNoise => depth
            .data()
            .iter()
            .map(|d| {
                let z: f64 = rng.sample(StandardNormal);
                d * (1.0 + (strength * z).max(-0.9))
            })
            .collect(),
        DepthNoise::Quantize => depth
            .data()
            .iter()
            .map(|d| ((d / strength).round() * strength).max(strength))
            .collect(),
        DepthNoise::SmoothBias => {
            let (fu, fv, phase): (f64, f64, f64) =
                (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.0..std::f64::consts::TAU));
            let per_frame = h * w;
            depth
                .data()
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let p = i % per_frame;
                    let (v, u) = ((p / w) as f64 / h as f64, (p % w) as f64 / w as f64);
                    let s = (std::f64::consts::TAU * (fu * u + fv * v) + phase).sin();
                    d * (1.0 + strength * s).max(0.1)
                })
                .collect()
        }
    };
    Ok(DepthClip::new(depth.frames(), h, w, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{orbit_from_eye, translate_path};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::centered(32, 32, 1.0).unwrap()
    }

    #[test]
    fn identical_trajectories_give_identical_target() {
        let scene = gen_scene(3, 4, Complexity::Medium).unwrap();
        let src = Trajectory::constant(default_source_pose(), 4).unwrap();
        let t = make_triple(&scene, &src, &src, &k(), Splat::Nearest).unwrap();
        assert_eq!(t.source, t.target);
        assert_eq!(t.scaffold.valid_fraction(), 1.0);
    }

    #[test]
    fn lateral_motion_opens_holes_on_medium_scenes() {
        for seed in 0..5 {
            let scene = gen_scene(seed, 4, Complexity::Medium).unwrap();
            let src = Trajectory::constant(default_source_pose(), 4).unwrap();
            let tgt = translate_path(default_source_pose(), Vector3::new(0.8, 0.0, 0.0), 4).unwrap();
            let t = make_triple(&scene, &src, &tgt, &k(), Splat::Nearest).unwrap();
            assert!(t.scaffold.valid_fraction() < 1.0, "seed {seed}");
            let last = t.scaffold.frame_validity(3);
            assert!(last.iter().any(|v| !v));
        }
    }

    #[test]
    fn scaffold_colors_match_target_on_flat_scenes() {
        let scene = gen_scene(8, 4, Complexity::Medium).unwrap().with_flat_textures();
        let src = Trajectory::constant(default_source_pose(), 4).unwrap();
        let tgt = orbit_from_eye(
            Vector3::from(SCENE_CENTER),
            Vector3::from(SOURCE_EYE),
            20.0,
            Vector3::y(),
            4,
        )
        .unwrap();
        let k = k();
        let t = make_triple(&scene, &src, &tgt, &k, Splat::Nearest).unwrap();
        let (w, h) = (32, 32);
        let (mut same_surface, mut matched, mut valid) = (0, 0, 0);
        for f in 0..4 {
            let (_, target_depth) = render_view(&scene, &tgt.poses()[f], &k, f).unwrap();
            for v in 0..h {
                for u in 0..w {
                    let i = (f * h + v) * w + u;
                    if !t.scaffold.validity[i] {
                        continue;
                    }
                    valid += 1;
                    let c = t.target.pixel(f, v, u);
                    let s = t.scaffold.frames.pixel(f, v, u);
                    let err = (0..3).map(|ch| (s[ch] - c[ch]).abs()).fold(0.0, f64::max);
                    if err <= 2.0 / 255.0 {
                        matched += 1;
                    }
                    // Splats from the surface the target actually sees must agree exactly;
                    // others are bleed-through between sparse foreground samples.
                    let zt = target_depth[v * w + u];
                    let interior = (1..h - 1).contains(&v)
                        && (1..w - 1).contains(&u)
                        && [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)].iter().all(|(dv, du)| {
                            let (nv, nu) = ((v as i64 + dv) as usize, (u as i64 + du) as usize);
                            t.target.pixel(f, nv, nu) == c
                                && t.scaffold.validity[(f * h + nv) * w + nu]
                                && t.scaffold.frames.pixel(f, nv, nu) == s
                        });
                    if interior && (t.scaffold.zbuffer[i] - zt).abs() < 0.02 * zt {
                        same_surface += 1;
                        assert!(err <= 2.0 / 255.0, "frame {f} pixel ({u},{v}) err {err} zs {} zt {zt} s {s:?} c {c:?}", t.scaffold.zbuffer[i]);
                    }
                }
            }
        }
        assert!(same_surface as f64 > 0.3 * valid as f64, "{same_surface} / {valid}");
        assert!(matched as f64 > 0.9 * valid as f64, "{matched} / {valid}");
    }

    #[test]
    fn zero_strength_is_identity() {
        let d = DepthClip::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for mode in [DepthNoise::MultiplicativeNoise, DepthNoise::Quantize, DepthNoise::SmoothBias] {
            assert_eq!(perturb_depth(&d, mode, 0.0, 9).unwrap(), d);
        }
    }

    #[test]
    fn multiplicative_noise_rms_matches_strength() {
        let d = DepthClip::new(4, 32, 32, (0..4096).map(|i| 1.0 + (i % 17) as f64 * 0.3).collect()).unwrap();
        let p = perturb_depth(&d, DepthNoise::MultiplicativeNoise, 0.1, 42).unwrap();
        let rms = (d
            .data()
            .iter()
            .zip(p.data())
            .map(|(a, b)| ((b - a) / a).powi(2))
            .sum::<f64>()
            / 4096.0)
            .sqrt();
        assert!((rms - 0.1).abs() < 0.02, "rms {rms}");
        assert!(p.data().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn other_modes_stay_positive() {
        let d = DepthClip::new(1, 8, 8, (0..64).map(|i| 0.05 + i as f64 * 0.1).collect()).unwrap();
        for mode in [DepthNoise::Quantize, DepthNoise::SmoothBias] {
            let p = perturb_depth(&d, mode, 0.5, 1).unwrap();
            assert!(p.data().iter().all(|v| *v > 0.0));
            assert_ne!(p, d);
        }
    }
}
