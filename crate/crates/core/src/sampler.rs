//! Euler integration of the learned velocity field from noise (`t = 0`) to
//! data (`t = 1`), with the gate evaluated at the start of each step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip::{DepthClip, VideoClip};
use crate::codec::{decode, encode, CodecError, LatentClip};
use crate::denoiser::{forward, DenoiserError, DenoiserParams};
use crate::gate::{assemble_input, gate, ActiveCondition, ConditionPair, ConditioningMode, ConditioningSchedule, GateError};
use crate::geom::{render_scaffold, CameraIntrinsics, GeomError, Splat};
use crate::traj::Trajectory;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("Euler step needs dt > 0 and t + dt <= 1 (t = {t}, dt = {dt})")]
    Step { t: f64, dt: f64 },
    #[error("velocity has a non-finite value at index {0}")]
    NonFiniteVelocity(usize),
    #[error("velocity shape {velocity:?} differs from latent shape {latent:?}")]
    Shape { latent: [usize; 4], velocity: [usize; 4] },
    #[error("checkpoint was trained with mode {trained}, but the schedule requests {requested}")]
    ModeMismatch {
        trained: ConditioningMode,
        requested: ConditioningMode,
    },
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub schedule: ConditioningSchedule,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 20,
            schedule: ConditioningSchedule::default(),
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.n_steps == 0 {
            return Err(SampleError::Config("n_steps must be at least 1".into()));
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// Flow time at the start of step `k` (1-based) of `n`; exact for any `n`.
pub fn step_start_time(k: usize, n: usize) -> f64 {
    (k - 1) as f64 / n as f64
}

/// Noise level at the start of step `k`, computed from integers so that grid
/// points such as `u = 0.85` at `n = 20` are represented exactly.
pub fn step_start_noise(k: usize, n: usize) -> f64 {
    (n + 1 - k) as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub t: f64,
    pub u: f64,
    pub active: ActiveCondition,
}

/// Number of changes of the active condition along a trace.
pub fn transitions(trace: &[TraceStep]) -> usize {
    trace.windows(2).filter(|w| w[0].active != w[1].active).count()
}

/// Plain-text sidecar: one `step t u condition` line per step.
pub fn trace_to_text(trace: &[TraceStep]) -> String {
    let mut out = String::from("# step t u condition\n");
    for s in trace {
        let name = serde_json::to_value(s.active)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        out.push_str(&format!("{} {:?} {:?} {}\n", s.step, s.t, s.u, name));
    }
    out
}

pub fn euler_step(z: &LatentClip, t: f64, dt: f64, velocity: &LatentClip) -> Result<LatentClip, SampleError> {
    if !(dt > 0.0) || t + dt > 1.0 + 1e-12 {
        return Err(SampleError::Step { t, dt });
    }
    if z.shape() != velocity.shape() {
        return Err(SampleError::Shape {
            latent: z.shape(),
            velocity: velocity.shape(),
        });
    }
    if let Some(i) = velocity.data().iter().position(|v| !v.is_finite()) {
        return Err(SampleError::NonFiniteVelocity(i));
    }
    Ok(z.axpby(1.0, velocity, dt))
}

/// Checks that the parameters have the context width the schedule needs.
fn check_compat(params: &DenoiserParams, schedule: &ConditioningSchedule) -> Result<(), SampleError> {
    let need = schedule.mode.context_blocks();
    let have = params.config().context_blocks;
    if need != have {
        return Err(SampleError::Config(format!(
            "mode {} needs {need} context block(s), the model takes {have}",
            schedule.mode
        )));
    }
    Ok(())
}

pub fn initial_noise(shape: [usize; 4], seed: u64) -> LatentClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [n, h, w, c] = shape;
    let data = (0..n * h * w * c).map(|_| rng.sample(StandardNormal)).collect();
    LatentClip::new(n, h, w, c, data).expect("Gaussian samples are finite")
}

pub fn sample(
    params: &DenoiserParams,
    pair: &ConditionPair,
    cfg: &SamplerConfig,
) -> Result<(LatentClip, Vec<TraceStep>), SampleError> {
    cfg.validate()?;
    check_compat(params, &cfg.schedule)?;
    let n = cfg.n_steps;
    let dt = 1.0 / n as f64;
    let mut z = initial_noise(pair.shape(), cfg.seed);
    let mut trace = Vec::with_capacity(n);
    for k in 1..=n {
        let t = step_start_time(k, n);
        let u = step_start_noise(k, n);
        let (active, blocks) = gate(&cfg.schedule, u, pair);
        let input = assemble_input(&z, &blocks)?;
        let v = forward(params, &input, u)?;
        z = euler_step(&z, t, dt, &v)?;
        trace.push(TraceStep { step: k, t, u, active });
    }
    Ok((z, trace))
}

/// Scaffold rendering, encoding, sampling and decoding in one call.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    params: &DenoiserParams,
    src: &VideoClip,
    depth: &DepthClip,
    k: &CameraIntrinsics,
    src_traj: &Trajectory,
    tgt_traj: &Trajectory,
    splat: Splat,
    spatial_factor: usize,
    cfg: &SamplerConfig,
) -> Result<(VideoClip, Vec<TraceStep>), SampleError> {
    let scaffold = render_scaffold(src, depth, k, src_traj, tgt_traj, splat)?;
    let pair = ConditionPair::new(encode(&scaffold.frames, spatial_factor)?, encode(src, spatial_factor)?)?;
    let (z, trace) = sample(params, &pair, cfg)?;
    Ok((decode(&z, true)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;

    fn latent(seed: u64) -> LatentClip {
        initial_noise([2, 2, 2, 3], seed)
    }

    fn model(blocks: usize) -> DenoiserParams {
        DenoiserParams::init(
            DenoiserConfig {
                channels: 3,
                frames: 2,
                context_blocks: blocks,
                hidden: 4,
                embed_dim: 4,
            },
            0,
        )
        .unwrap()
    }

    fn pair() -> ConditionPair {
        ConditionPair::new(latent(1), latent(2)).unwrap()
    }

    #[test]
    fn euler_basics() {
        let z = latent(3);
        let zero = LatentClip::zeros_like(&z);
        assert_eq!(euler_step(&z, 0.0, 0.5, &zero).unwrap(), z);
        let z1 = latent(4);
        let v = z1.axpby(1.0, &z, -1.0);
        let end = euler_step(&z, 0.0, 1.0, &v).unwrap();
        for (a, b) in end.data().iter().zip(z1.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let half = euler_step(&euler_step(&z, 0.0, 0.5, &v).unwrap(), 0.5, 0.5, &v).unwrap();
        for (a, b) in half.data().iter().zip(end.data()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(matches!(euler_step(&z, 0.8, 0.5, &v), Err(SampleError::Step { .. })));
        assert!(matches!(euler_step(&z, 0.0, 0.0, &v), Err(SampleError::Step { .. })));
    }

    #[test]
    fn structured_trace_switches_after_step_three() {
        let cfg = SamplerConfig::default();
        let (_, trace) = sample(&model(1), &pair(), &cfg).unwrap();
        assert_eq!(trace.len(), 20);
        for s in &trace {
            let want = if s.step <= 3 {
                ActiveCondition::Scaffold
            } else {
                ActiveCondition::Source
            };
            assert_eq!(s.active, want, "step {}", s.step);
        }
        assert_eq!(transitions(&trace), 1);
        assert_eq!(trace[3].u, 0.85);
    }

    #[test]
    fn scaffold_only_never_switches() {
        let cfg = SamplerConfig {
            schedule: ConditioningSchedule::new(ConditioningMode::ScaffoldOnly, 0.85).unwrap(),
            ..SamplerConfig::default()
        };
        let (_, trace) = sample(&model(1), &pair(), &cfg).unwrap();
        assert!(trace.iter().all(|s| s.active == ActiveCondition::Scaffold));
        assert_eq!(transitions(&trace), 0);
    }

    #[test]
    fn degenerate_thresholds_match_fixed_modes() {
        let p = model(1);
        let only = SamplerConfig {
            schedule: ConditioningSchedule::new(ConditioningMode::ScaffoldOnly, 0.85).unwrap(),
            ..SamplerConfig::default()
        };
        let zero = SamplerConfig {
            schedule: ConditioningSchedule::new(ConditioningMode::Structured, 0.0).unwrap(),
            ..SamplerConfig::default()
        };
        let a = sample(&p, &pair(), &only).unwrap();
        let b = sample(&p, &pair(), &zero).unwrap();
        assert_eq!(a, b);
        let one = SamplerConfig {
            schedule: ConditioningSchedule::new(ConditioningMode::Structured, 1.0).unwrap(),
            ..SamplerConfig::default()
        };
        let (_, trace) = sample(&p, &pair(), &one).unwrap();
        assert!(trace.iter().all(|s| s.active == ActiveCondition::Source));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SamplerConfig {
            seed: 42,
            ..SamplerConfig::default()
        };
        let a = sample(&model(1), &pair(), &cfg).unwrap();
        let b = sample(&model(1), &pair(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn context_width_is_checked() {
        let cfg = SamplerConfig {
            schedule: ConditioningSchedule::new(ConditioningMode::StaticBoth, 0.85).unwrap(),
            ..SamplerConfig::default()
        };
        assert!(matches!(sample(&model(1), &pair(), &cfg), Err(SampleError::Config(_))));
        assert!(sample(&model(2), &pair(), &cfg).is_ok());
    }

    #[test]
    fn trace_text_lists_every_step() {
        let (_, trace) = sample(&model(1), &pair(), &SamplerConfig::default()).unwrap();
        let text = trace_to_text(&trace);
        assert_eq!(text.lines().count(), 21);
        assert!(text.lines().nth(1).unwrap().ends_with("scaffold"));
        assert!(text.lines().last().unwrap().ends_with("source"));
    }
}
