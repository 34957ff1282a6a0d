//! Training data: scene triples encoded to latents, a Gaussian toy source,
//! named benchmark trajectories and seed-range bookkeeping.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode, CodecError, LatentClip};
use crate::gate::{ConditionPair, GateError};
use crate::geom::{CameraIntrinsics, CameraPose, GeomError, Splat};
use crate::synth::{default_source_pose, gen_scene, make_triple, Complexity, SynthError, TrainingTriple, SCENE_CENTER};
use crate::traj::{dolly, orbit_from_eye, translate_path, TrajError, Trajectory};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("seed ranges overlap: training {train:?}, evaluation {eval:?}")]
    SeedOverlap { train: SeedRange, eval: SeedRange },
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("unknown benchmark trajectory {0:?}")]
    UnknownTrajectory(String),
}

/// Half-open range of scene seeds `[start, start + count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

impl SeedRange {
    pub fn end(&self) -> u64 {
        self.start.saturating_add(self.count)
    }

    pub fn contains(&self, seed: u64) -> bool {
        (self.start..self.end()).contains(&seed)
    }

    pub fn overlaps(&self, other: &SeedRange) -> bool {
        self.count > 0 && other.count > 0 && self.start < other.end() && other.start < self.end()
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.start..self.end()
    }
}

/// Rejects evaluation seeds that could have been seen in training.
pub fn check_held_out(train: &SeedRange, eval: &SeedRange) -> Result<(), DataError> {
    if train.overlaps(eval) {
        return Err(DataError::SeedOverlap {
            train: *train,
            eval: *eval,
        });
    }
    Ok(())
}

/// Random target-camera motions for training, all starting at the source pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSpec {
    /// Largest orbit sweep about the vertical axis through the scene center.
    pub max_orbit_deg: f64,
    pub max_translate: f64,
    pub max_dolly: f64,
    /// Probability of an orbit; the rest splits evenly between translations and dollies.
    pub orbit_weight: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            max_orbit_deg: 90.0,
            max_translate: 0.8,
            max_dolly: 1.0,
            orbit_weight: 0.7,
        }
    }
}

impl MotionSpec {
    pub fn sample(&self, rng: &mut impl Rng, source: CameraPose, n_frames: usize) -> Result<Trajectory, DataError> {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let pick: f64 = rng.gen();
        let mag: f64 = rng.gen();
        let traj = if pick < self.orbit_weight {
            orbit_from_eye(
                Vector3::from(SCENE_CENTER),
                source.center(),
                sign * mag * self.max_orbit_deg,
                Vector3::y(),
                n_frames,
            )?
        } else if pick < self.orbit_weight + (1.0 - self.orbit_weight) / 2.0 {
            let dir = if rng.gen::<f64>() < 0.7 { Vector3::x() } else { Vector3::y() };
            translate_path(source, dir * (sign * mag * self.max_translate), n_frames)?
        } else {
            dolly(source, sign * mag * self.max_dolly, n_frames)?
        };
        Ok(traj)
    }
}

/// Rendering and sampling parameters shared by data generation and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub focal_scale: f64,
    pub spatial_factor: usize,
    pub complexity: Complexity,
    pub splat: Splat,
    pub train_seeds: SeedRange,
    pub motion: MotionSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            frames: 8,
            focal_scale: 1.0,
            spatial_factor: 2,
            complexity: Complexity::Medium,
            splat: Splat::Nearest,
            train_seeds: SeedRange { start: 0, count: 4096 },
            motion: MotionSpec::default(),
        }
    }
}

impl DatasetSpec {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, DataError> {
        Ok(CameraIntrinsics::centered(self.width, self.height, self.focal_scale)?)
    }

    pub fn latent_shape(&self) -> [usize; 4] {
        let f = self.spatial_factor;
        [self.frames, self.height / f, self.width / f, 3 * f * f]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let f = self.spatial_factor;
        if f == 0 || self.width % f != 0 || self.height % f != 0 {
            return Err(DataError::Spec(format!(
                "{}x{} is not divisible by spatial factor {f}",
                self.width, self.height
            )));
        }
        if self.frames == 0 || self.train_seeds.count == 0 {
            return Err(DataError::Spec("frames and train_seeds.count must be positive".into()));
        }
        self.intrinsics()?;
        Ok(())
    }

    /// Source clip from a static camera at the default pose.
    pub fn source_trajectory(&self) -> Result<Trajectory, DataError> {
        Ok(Trajectory::constant(default_source_pose(), self.frames)?)
    }

    pub fn triple(&self, scene_seed: u64, target: &Trajectory) -> Result<TrainingTriple, DataError> {
        let scene = gen_scene(scene_seed, self.frames, self.complexity)?;
        let k = self.intrinsics()?;
        Ok(make_triple(&scene, &self.source_trajectory()?, target, &k, self.splat)?)
    }
}

/// Encoded regression target and its two condition latents.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub z1: LatentClip,
    pub pair: ConditionPair,
}

impl TrainExample {
    pub fn from_triple(triple: &TrainingTriple, spatial_factor: usize) -> Result<Self, DataError> {
        let z1 = encode(&triple.target, spatial_factor)?;
        let c_ren = encode(&triple.scaffold.frames, spatial_factor)?;
        let c_src = encode(&triple.source, spatial_factor)?;
        Ok(Self {
            z1,
            pair: ConditionPair::new(c_ren, c_src)?,
        })
    }
}

/// Deterministic, index-addressed supply of training examples.
pub trait TrainingSource: Sync {
    fn example(&self, index: u64) -> Result<TrainExample, DataError>;

    /// `[n, h, w, c]` of every example's latents.
    fn latent_shape(&self) -> [usize; 4];
}

/// Scene triples: scene seed `train_seeds.start + index % count`, target
/// motion drawn from a generator seeded by `index`.
#[derive(Debug, Clone)]
pub struct SceneSource {
    spec: DatasetSpec,
}

impl SceneSource {
    pub fn new(spec: DatasetSpec) -> Result<Self, DataError> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn triple(&self, index: u64) -> Result<TrainingTriple, DataError> {
        let seeds = &self.spec.train_seeds;
        let scene_seed = seeds.start + index % seeds.count;
        let mut rng = ChaCha8Rng::seed_from_u64(index ^ 0x6d6f_7469_6f6e);
        let target = self.spec.motion.sample(&mut rng, default_source_pose(), self.spec.frames)?;
        self.spec.triple(scene_seed, &target)
    }
}

impl TrainingSource for SceneSource {
    fn example(&self, index: u64) -> Result<TrainExample, DataError> {
        TrainExample::from_triple(&self.triple(index)?, self.spec.spatial_factor)
    }

    fn latent_shape(&self) -> [usize; 4] {
        self.spec.latent_shape()
    }
}

/// Data latents drawn from `N(mean, diag(std²))` with all-zero conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSource {
    shape: [usize; 4],
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl GaussianSource {
    pub fn new(shape: [usize; 4], mean: Vec<f64>, std: Vec<f64>) -> Result<Self, DataError> {
        let len: usize = shape.iter().product();
        if mean.len() != len || std.len() != len {
            return Err(DataError::Spec(format!(
                "mean/std lengths {}/{} do not match latent size {len}",
                mean.len(),
                std.len()
            )));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(DataError::Spec("std must be positive".into()));
        }
        Ok(Self { shape, mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

impl TrainingSource for GaussianSource {
    fn example(&self, index: u64) -> Result<TrainExample, DataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(index);
        let data = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let [n, h, w, c] = self.shape;
        let z1 = LatentClip::new(n, h, w, c, data)?;
        let zero = LatentClip::zeros_like(&z1);
        Ok(TrainExample {
            z1,
            pair: ConditionPair::new(zero.clone(), zero)?,
        })
    }

    fn latent_shape(&self) -> [usize; 4] {
        self.shape
    }
}

pub const BENCHMARK_SCHEMA: &str = "mocam-trajectories/v1";

const BENCHMARK_TOML: &str = r#"
schema = "mocam-trajectories/v1"

[[trajectory]]
name = "orbit_ccw_30"
kind = "orbit"
degrees = 30.0

[[trajectory]]
name = "orbit_cw_30"
kind = "orbit"
degrees = -30.0

[[trajectory]]
name = "orbit_ccw_45"
kind = "orbit"
degrees = 45.0

[[trajectory]]
name = "orbit_cw_45"
kind = "orbit"
degrees = -45.0

[[trajectory]]
name = "arc_up_15"
kind = "orbit"
degrees = 15.0
axis = [1.0, 0.0, 0.0]

[[trajectory]]
name = "truck_left"
kind = "translate"
offset = [-0.6, 0.0, 0.0]

[[trajectory]]
name = "truck_right"
kind = "translate"
offset = [0.6, 0.0, 0.0]

[[trajectory]]
name = "dolly_in"
kind = "dolly"
distance = 1.0

[[trajectory]]
name = "dolly_out"
kind = "dolly"
distance = -1.0
"#;

fn default_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionKind {
    /// Orbit about `axis` through the scene center, starting at the source camera.
    Orbit {
        degrees: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
    },
    Translate { offset: [f64; 3] },
    Dolly { distance: f64 },
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrajectory {
    pub name: String,
    #[serde(flatten)]
    pub motion: MotionKind,
}

impl NamedTrajectory {
    pub fn build(&self, source: CameraPose, n_frames: usize) -> Result<Trajectory, DataError> {
        let traj = match &self.motion {
            MotionKind::Orbit { degrees, axis } => orbit_from_eye(
                Vector3::from(SCENE_CENTER),
                source.center(),
                *degrees,
                Vector3::from(*axis),
                n_frames,
            )?,
            MotionKind::Translate { offset } => translate_path(source, Vector3::from(*offset), n_frames)?,
            MotionKind::Dolly { distance } => dolly(source, *distance, n_frames)?,
            MotionKind::Static => Trajectory::constant(source, n_frames)?,
        };
        Ok(traj)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkFile {
    schema: String,
    trajectory: Vec<NamedTrajectory>,
}

/// The nine built-in benchmark target trajectories.
pub fn benchmark_trajectories() -> Vec<NamedTrajectory> {
    let file: BenchmarkFile = toml::from_str(BENCHMARK_TOML).expect("embedded benchmark config parses");
    assert_eq!(file.schema, BENCHMARK_SCHEMA);
    file.trajectory
}

pub fn benchmark_trajectory(name: &str) -> Result<NamedTrajectory, DataError> {
    benchmark_trajectories()
        .into_iter()
        .find(|t| t.name == name)
        .ok_or_else(|| DataError::UnknownTrajectory(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        let a = SeedRange { start: 0, count: 10 };
        let b = SeedRange { start: 10, count: 5 };
        assert!(!a.overlaps(&b));
        assert!(check_held_out(&a, &b).is_ok());
        let c = SeedRange { start: 9, count: 1 };
        assert!(a.overlaps(&c));
        assert!(matches!(check_held_out(&a, &c), Err(DataError::SeedOverlap { .. })));
        assert!(!a.overlaps(&SeedRange { start: 3, count: 0 }));
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn benchmarks_parse_and_build() {
        let all = benchmark_trajectories();
        assert_eq!(all.len(), 9);
        for t in &all {
            let traj = t.build(default_source_pose(), 8).unwrap();
            assert_eq!(traj.len(), 8);
            assert_eq!(traj.first(), &default_source_pose(), "{}", t.name);
        }
        let o = benchmark_trajectory("orbit_ccw_45").unwrap().build(default_source_pose(), 8).unwrap();
        assert!((o.first().rotation_angle_deg(o.last()) - 45.0).abs() < 1e-9);
        assert!(benchmark_trajectory("spiral").is_err());
    }

    #[test]
    fn scene_source_is_deterministic() {
        let spec = DatasetSpec {
            width: 16,
            height: 16,
            frames: 4,
            ..DatasetSpec::default()
        };
        let src = SceneSource::new(spec).unwrap();
        let a = src.example(17).unwrap();
        let b = src.example(17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.z1.shape(), [4, 8, 8, 12]);
        assert_eq!(src.latent_shape(), [4, 8, 8, 12]);
        assert_ne!(a, src.example(18).unwrap());
    }

    #[test]
    fn gaussian_source_statistics() {
        let g = GaussianSource::new([1, 1, 1, 2], vec![1.0, -2.0], vec![0.5, 1.0]).unwrap();
        let xs: Vec<TrainExample> = (0..4000).map(|i| g.example(i).unwrap()).collect();
        for c in 0..2 {
            let vals: Vec<f64> = xs.iter().map(|e| e.z1.data()[c]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((m - g.mean()[c]).abs() < 0.05, "{m}");
            assert!((v - g.std()[c].powi(2)).abs() < 0.1 * g.std()[c].powi(2), "{v}");
        }
        assert!(xs[0].pair.c_ren().data().iter().all(|v| *v == 0.0));
        assert!(GaussianSource::new([1, 1, 1, 2], vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = DatasetSpec {
            width: 33,
            ..DatasetSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(DatasetSpec::default().validate().is_ok());
        assert_eq!(DatasetSpec::default().latent_shape(), [8, 16, 16, 12]);
    }
}
