use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;

pub const SCENE_SCHEMA: &str = "mocam-scene/v1";

/// Point every default trajectory looks at and orbits around.
pub const SCENE_CENTER: [f64; 3] = [0.0, 1.0, 4.0];
/// Default source camera position, level with [`SCENE_CENTER`].
pub const SOURCE_EYE: [f64; 3] = [0.0, 1.0, 0.0];

/// Axis-aligned room that every ray eventually hits.
pub const ROOM_MIN: [f64; 3] = [-7.0, 0.0, -5.0];
pub const ROOM_MAX: [f64; 3] = [7.0, 5.0, 12.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Small,
    Medium,
}

/// Flat (unlit) albedo pattern evaluated in the primitive's local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Flat { color: [f64; 3] },
    Checker { a: [f64; 3], b: [f64; 3], period: f64 },
    Stripes { a: [f64; 3], b: [f64; 3], period: f64, axis: usize },
}

impl Texture {
    pub fn sample(&self, local: [f64; 3]) -> [f64; 3] {
        match *self {
            Texture::Flat { color } => color,
            Texture::Checker { a, b, period } => {
                let s: i64 = local.iter().map(|c| (c / period).floor() as i64).sum();
                if s.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
            Texture::Stripes { a, b, period, axis } => {
                if ((local[axis] / period).floor() as i64).rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }

    /// Same texture with every color replaced by the mean of its two colors.
    pub fn flattened(&self) -> Texture {
        let mean = |a: [f64; 3], b: [f64; 3]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
        match *self {
            Texture::Flat { color } => Texture::Flat { color },
            Texture::Checker { a, b, .. } | Texture::Stripes { a, b, .. } => Texture::Flat { color: mean(a, b) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box.
    Cuboid { half_extents: [f64; 3] },
    /// Rectangle in a constant-`z` plane (fronto-parallel to the default camera).
    Panel { half_width: f64, half_height: f64 },
}

/// A primitive moving linearly: `center(i) = start + i * velocity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub start: [f64; 3],
    pub velocity: [f64; 3],
    pub texture: Texture,
}

impl Primitive {
    pub fn center(&self, frame: usize) -> Vector3<f64> {
        Vector3::from(self.start) + Vector3::from(self.velocity) * frame as f64
    }

    pub fn is_moving(&self) -> bool {
        self.velocity.iter().any(|v| *v != 0.0)
    }
}

/// Room walls: floor, ceiling, and four walls, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub floor: Texture,
    pub ceiling: Texture,
    pub walls: [Texture; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema: String,
    pub seed: u64,
    pub n_frames: usize,
    pub complexity: Complexity,
    pub primitives: Vec<Primitive>,
    pub background: Background,
}

impl Scene {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let scene: Scene = toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
        if scene.schema != SCENE_SCHEMA {
            return Err(SynthError::Parse(format!(
                "unsupported scene schema {:?}, expected {SCENE_SCHEMA:?}",
                scene.schema
            )));
        }
        Ok(scene)
    }

    /// Copy with every primitive held at its frame-`frame` position.
    pub fn frozen_at(&self, frame: usize) -> Scene {
        let mut s = self.clone();
        for p in &mut s.primitives {
            p.start = p.center(frame).into();
            p.velocity = [0.0; 3];
        }
        s
    }

    /// Copy with single-color textures everywhere.
    pub fn with_flat_textures(&self) -> Scene {
        let mut s = self.clone();
        for p in &mut s.primitives {
            p.texture = p.texture.flattened();
        }
        let bg = &mut s.background;
        bg.floor = bg.floor.flattened();
        bg.ceiling = bg.ceiling.flattened();
        for w in &mut bg.walls {
            *w = w.flattened();
        }
        s
    }
}

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)]
}

fn two_tone(rng: &mut ChaCha8Rng, contrast: f64) -> ([f64; 3], [f64; 3]) {
    let a = color(rng, 0.15, 0.85);
    let shift = rng.gen_range(-1.0..1.0) * contrast;
    let b = a.map(|c| (c + shift).clamp(0.0, 1.0));
    (a, b)
}

fn object_texture(rng: &mut ChaCha8Rng) -> Texture {
    match rng.gen_range(0..3) {
        0 => Texture::Flat {
            color: color(rng, 0.1, 0.95),
        },
        1 => {
            let (a, b) = two_tone(rng, 0.45);
            Texture::Stripes {
                a,
                b,
                period: rng.gen_range(0.25..0.5),
                axis: rng.gen_range(0..3),
            }
        }
        _ => {
            let (a, b) = two_tone(rng, 0.45);
            Texture::Checker {
                a,
                b,
                period: rng.gen_range(0.25..0.45),
            }
        }
    }
}

fn wall_texture(rng: &mut ChaCha8Rng) -> Texture {
    let (a, b) = two_tone(rng, 0.3);
    Texture::Checker {
        a,
        b,
        period: rng.gen_range(1.0..1.8),
    }
}

fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    match rng.gen_range(0..3) {
        0 => Shape::Sphere {
            radius: rng.gen_range(0.35..0.7),
        },
        1 => Shape::Cuboid {
            half_extents: [rng.gen_range(0.25..0.6), rng.gen_range(0.25..0.6), rng.gen_range(0.25..0.6)],
        },
        _ => Shape::Panel {
            half_width: rng.gen_range(0.3..0.7),
            half_height: rng.gen_range(0.3..0.7),
        },
    }
}

fn resting_height(shape: &Shape, rng: &mut ChaCha8Rng) -> f64 {
    match *shape {
        Shape::Sphere { radius } => radius + rng.gen_range(0.0..0.6),
        Shape::Cuboid { half_extents } => half_extents[1] + rng.gen_range(0.0..0.6),
        Shape::Panel { half_height, .. } => half_height + rng.gen_range(0.1..0.7),
    }
}

/// Deterministic procedural scene. `Medium` scenes always contain a static
/// occluder between the default camera and the moving content.
pub fn gen_scene(seed: u64, n_frames: usize, complexity: Complexity) -> Result<Scene, SynthError> {
    if n_frames == 0 {
        return Err(SynthError::NoFrames);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Background {
        floor: wall_texture(&mut rng),
        ceiling: wall_texture(&mut rng),
        walls: [
            wall_texture(&mut rng),
            wall_texture(&mut rng),
            wall_texture(&mut rng),
            wall_texture(&mut rng),
        ],
    };
    let n_objects = match complexity {
        Complexity::Small => 2,
        Complexity::Medium => rng.gen_range(3..5),
    };
    let span = (n_frames.max(2) - 1) as f64;
    let mut primitives = Vec::new();
    for i in 0..n_objects {
        let shape = random_shape(&mut rng);
        let y = resting_height(&shape, &mut rng);
        let start = [rng.gen_range(-1.4..1.4), y, rng.gen_range(3.6..5.6)];
        // The first object moves; the rest are static.
        let velocity = if i == 0 {
            let travel = rng.gen_range(0.5..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            [travel / span, 0.0, rng.gen_range(-0.3..0.3) / span]
        } else {
            [0.0; 3]
        };
        primitives.push(Primitive {
            shape,
            start,
            velocity,
            texture: object_texture(&mut rng),
        });
    }
    if complexity == Complexity::Medium {
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let shape = if rng.gen_bool(0.5) {
            Shape::Panel {
                half_width: rng.gen_range(0.3..0.5),
                half_height: rng.gen_range(0.5..0.8),
            }
        } else {
            Shape::Cuboid {
                half_extents: [rng.gen_range(0.2..0.35), rng.gen_range(0.5..0.8), rng.gen_range(0.15..0.3)],
            }
        };
        let half_height = match shape {
            Shape::Panel { half_height, .. } => half_height,
            Shape::Cuboid { half_extents } => half_extents[1],
            Shape::Sphere { radius } => radius,
        };
        primitives.push(Primitive {
            shape,
            start: [side * rng.gen_range(0.2..0.7), half_height, rng.gen_range(2.2..2.8)],
            velocity: [0.0; 3],
            texture: object_texture(&mut rng),
        });
    }
    Ok(Scene {
        schema: SCENE_SCHEMA.to_string(),
        seed,
        n_frames,
        complexity,
        primitives,
        background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let a = gen_scene(7, 8, Complexity::Medium).unwrap();
        let b = gen_scene(7, 8, Complexity::Medium).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_scene(1, 8, Complexity::Small).unwrap();
        let b = gen_scene(2, 8, Complexity::Small).unwrap();
        assert_ne!(a.primitives, b.primitives);
    }

    #[test]
    fn medium_has_moving_and_static_occluder() {
        for seed in 0..20 {
            let s = gen_scene(seed, 8, Complexity::Medium).unwrap();
            assert!(s.primitives.iter().any(|p| p.is_moving()));
            let occluder = s.primitives.last().unwrap();
            assert!(!occluder.is_moving());
            assert!(occluder.start[2] < 3.0);
        }
    }

    #[test]
    fn toml_round_trip_and_schema_check() {
        let s = gen_scene(3, 5, Complexity::Medium).unwrap();
        assert_eq!(Scene::from_toml(&s.to_toml()).unwrap(), s);
        let bad = s.to_toml().replace(SCENE_SCHEMA, "mocam-scene/v0");
        assert!(matches!(Scene::from_toml(&bad), Err(SynthError::Parse(_))));
    }

    #[test]
    fn frozen_scene_is_static() {
        let s = gen_scene(4, 8, Complexity::Medium).unwrap().frozen_at(3);
        assert!(s.primitives.iter().all(|p| !p.is_moving()));
    }

    #[test]
    fn zero_frames_rejected() {
        assert_eq!(gen_scene(0, 0, Complexity::Small), Err(SynthError::NoFrames));
    }
}
