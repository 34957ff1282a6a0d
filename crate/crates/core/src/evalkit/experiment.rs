//! Fixed-seed evaluation of trained checkpoints on held-out scenes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_pose, pose_errors, psnr, ssim, EvalError, PoseGridSpec, SsimParams};
use crate::checkpoint::Checkpoint;
use crate::codec::{decode, encode};
use crate::dataset::{benchmark_trajectory, check_held_out, DatasetSpec, SeedRange};
use crate::gate::{ConditionPair, ConditioningMode, ConditioningSchedule};
use crate::sampler::{sample, SamplerConfig};
use crate::synth::{default_source_pose, gen_scene, make_triple, perturb_depth, DepthNoise, Scene, TrainingTriple};
use crate::traj::{scale_magnitude, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Ablation,
    MotionSweep,
    DepthSweep,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::MotionSweep => "motion_sweep",
            ExperimentKind::DepthSweep => "depth_sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    /// Held-out scene seeds; must not overlap any checkpoint's training seeds.
    pub eval_seeds: SeedRange,
    /// Benchmark trajectories cycled over scenes for the ablation and depth sweep.
    pub ablation_trajectories: Vec<String>,
    /// Base trajectories for the motion sweep, scaled by each factor.
    pub sweep_trajectories: Vec<String>,
    pub motion_factors: Vec<f64>,
    pub depth_strengths: Vec<f64>,
    pub depth_noise: DepthNoise,
    pub n_steps: usize,
    pub pose_grid: PoseGridSpec,
    pub ssim: SsimParams,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            eval_seeds: SeedRange {
                start: 1_000_000,
                count: 10,
            },
            ablation_trajectories: vec!["orbit_ccw_45".into(), "orbit_cw_45".into()],
            sweep_trajectories: vec!["orbit_ccw_30".into(), "orbit_cw_30".into()],
            motion_factors: vec![1.0, 2.0, 3.0],
            depth_strengths: vec![0.0, 0.05, 0.1],
            depth_noise: DepthNoise::MultiplicativeNoise,
            n_steps: 20,
            pose_grid: PoseGridSpec::default(),
            ssim: SsimParams::default(),
        }
    }
}

/// Metrics of one generated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRow {
    pub scene_seed: u64,
    pub trajectory: String,
    pub factor_or_strength: f64,
    pub mode: ConditioningMode,
    pub psnr: f64,
    /// Over scaffold-invalid pixels; absent when the scaffold has no holes.
    pub masked_psnr: Option<f64>,
    pub ssim: f64,
    pub rot_err: f64,
    pub trans_err: f64,
}

/// Per-mode means over scenes at one sweep setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub factor_or_strength: f64,
    pub mode: ConditioningMode,
    pub psnr: f64,
    pub masked_psnr: Option<f64>,
    pub ssim: f64,
    pub rot_err: f64,
    pub trans_err: f64,
}

/// Quality of the conditioning scaffold itself, over its valid pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldRow {
    pub factor_or_strength: f64,
    pub valid_psnr: f64,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub mode: ConditioningMode,
    pub checkpoint_sha256: String,
    pub schedule: ConditioningSchedule,
    pub train_seeds: SeedRange,
    pub train_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ExperimentKind,
    pub models: Vec<ModelProvenance>,
    pub eval: EvalSpec,
    pub dataset: DatasetSpec,
    pub clips: Vec<ClipRow>,
    pub series: Vec<SeriesRow>,
    pub scaffold: Vec<ScaffoldRow>,
}

impl EvalReport {
    pub fn series_for(&self, mode: ConditioningMode) -> Vec<&SeriesRow> {
        self.series.iter().filter(|r| r.mode == mode).collect()
    }

    pub fn series_csv(&self) -> String {
        let mut out = String::from("factor_or_strength,mode,psnr,masked_psnr,ssim,rot_err,trans_err\n");
        for r in &self.series {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.factor_or_strength,
                r.mode,
                r.psnr,
                r.masked_psnr.map_or("nan".to_string(), |v| v.to_string()),
                r.ssim,
                r.rot_err,
                r.trans_err
            ));
        }
        out
    }

    pub fn scaffold_csv(&self) -> String {
        let mut out = String::from("factor_or_strength,valid_psnr,valid_fraction\n");
        for r in &self.scaffold {
            out.push_str(&format!("{},{},{}\n", r.factor_or_strength, r.valid_psnr, r.valid_fraction));
        }
        out
    }
}

struct Job {
    setting: f64,
    scene_seed: u64,
    trajectory: String,
}

struct Prepared {
    scene: Scene,
    triple: TrainingTriple,
}

fn target_for(kind: ExperimentKind, data: &DatasetSpec, name: &str, setting: f64) -> Result<Trajectory, EvalError> {
    let base = benchmark_trajectory(name)?.build(default_source_pose(), data.frames)?;
    Ok(match kind {
        ExperimentKind::MotionSweep => scale_magnitude(&base, setting)?,
        _ => base,
    })
}

fn prepare(kind: ExperimentKind, spec: &EvalSpec, data: &DatasetSpec, job: &Job) -> Result<Prepared, EvalError> {
    let scene = gen_scene(job.scene_seed, data.frames, data.complexity)?;
    let k = data.intrinsics()?;
    let target = target_for(kind, data, &job.trajectory, job.setting)?;
    let mut triple = make_triple(&scene, &data.source_trajectory()?, &target, &k, data.splat)?;
    if kind == ExperimentKind::DepthSweep && job.setting != 0.0 {
        let depth = perturb_depth(&triple.source_depth, spec.depth_noise, job.setting, job.scene_seed)?;
        triple = triple.with_source_depth(depth, &k, data.splat)?;
    }
    Ok(Prepared { scene, triple })
}

fn scaffold_stats(triple: &TrainingTriple) -> Result<(Option<f64>, f64), EvalError> {
    let valid = &triple.scaffold.validity;
    let frac = triple.scaffold.valid_fraction();
    let p = if valid.iter().any(|v| *v) {
        Some(psnr(&triple.scaffold.frames, &triple.target, Some(valid))?)
    } else {
        None
    };
    Ok((p, frac))
}

fn evaluate_clip(
    ck: &Checkpoint,
    prepared: &Prepared,
    data: &DatasetSpec,
    spec: &EvalSpec,
    job: &Job,
) -> Result<ClipRow, EvalError> {
    let t = &prepared.triple;
    let f = data.spatial_factor;
    let pair = ConditionPair::new(encode(&t.scaffold.frames, f)?, encode(&t.source, f)?)?;
    let cfg = SamplerConfig {
        n_steps: spec.n_steps,
        schedule: ck.meta.schedule,
        seed: job.scene_seed,
    };
    let (z, _) = sample(&ck.params, &pair, &cfg)?;
    let out = decode(&z, true)?;
    let holes = t.scaffold.invalid_mask();
    let masked_psnr = if holes.iter().any(|h| *h) {
        Some(psnr(&out, &t.target, Some(&holes))?)
    } else {
        None
    };
    let k = data.intrinsics()?;
    let estimated = t
        .target_traj
        .poses()
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let grid = spec.pose_grid.candidates(pose)?;
            estimate_pose(out.frame(i), &prepared.scene, i, &k, &grid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (rot_err, trans_err) = pose_errors(&Trajectory::from_poses(estimated)?, &t.target_traj)?;
    Ok(ClipRow {
        scene_seed: job.scene_seed,
        trajectory: job.trajectory.clone(),
        factor_or_strength: job.setting,
        mode: ck.meta.mode,
        psnr: psnr(&out, &t.target, None)?,
        masked_psnr,
        ssim: ssim(&out, &t.target, &spec.ssim)?,
        rot_err,
        trans_err,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Evaluates every checkpoint on the same held-out scenes, settings and
/// sampler seeds. Clips are processed in parallel and reported in job order.
pub fn run_experiment(
    kind: ExperimentKind,
    checkpoints: &[Checkpoint],
    data: &DatasetSpec,
    spec: &EvalSpec,
) -> Result<EvalReport, EvalError> {
    if checkpoints.is_empty() {
        return Err(EvalError::Config("no checkpoints given".into()));
    }
    for ck in checkpoints {
        check_held_out(&ck.train_seeds(), &spec.eval_seeds)?;
        if ck.meta.dataset.latent_shape() != data.latent_shape() {
            return Err(EvalError::Config(format!(
                "checkpoint ({} mode) was trained on latents {:?}, evaluation uses {:?}",
                ck.meta.mode,
                ck.meta.dataset.latent_shape(),
                data.latent_shape()
            )));
        }
    }
    let (settings, names) = match kind {
        ExperimentKind::Ablation => (vec![1.0], &spec.ablation_trajectories),
        ExperimentKind::MotionSweep => (spec.motion_factors.clone(), &spec.sweep_trajectories),
        ExperimentKind::DepthSweep => (spec.depth_strengths.clone(), &spec.ablation_trajectories),
    };
    if names.is_empty() || settings.is_empty() || spec.eval_seeds.count == 0 {
        return Err(EvalError::Config("experiment has no trajectories, settings or scenes".into()));
    }
    let jobs: Vec<Job> = settings
        .iter()
        .flat_map(|&setting| {
            spec.eval_seeds.iter().enumerate().map(move |(i, scene_seed)| Job {
                setting,
                scene_seed,
                trajectory: names[i % names.len()].clone(),
            })
        })
        .collect();
    let results: Vec<(Vec<ClipRow>, (Option<f64>, f64))> = jobs
        .par_iter()
        .map(|job| {
            let prepared = prepare(kind, spec, data, job)?;
            let stats = scaffold_stats(&prepared.triple)?;
            let rows = checkpoints
                .iter()
                .map(|ck| evaluate_clip(ck, &prepared, data, spec, job))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((rows, stats))
        })
        .collect::<Result<_, EvalError>>()?;

    let clips: Vec<ClipRow> = results.iter().flat_map(|(rows, _)| rows.iter().cloned()).collect();
    let mut series = Vec::new();
    let mut scaffold = Vec::new();
    for &setting in &settings {
        let at: Vec<usize> = (0..jobs.len()).filter(|&i| jobs[i].setting == setting).collect();
        scaffold.push(ScaffoldRow {
            factor_or_strength: setting,
            valid_psnr: mean(at.iter().filter_map(|&i| results[i].1 .0)).unwrap_or(f64::NAN),
            valid_fraction: mean(at.iter().map(|&i| results[i].1 .1)).unwrap_or(f64::NAN),
        });
        for ck in checkpoints {
            let rows: Vec<&ClipRow> = clips
                .iter()
                .filter(|r| r.factor_or_strength == setting && r.mode == ck.meta.mode)
                .collect();
            series.push(SeriesRow {
                factor_or_strength: setting,
                mode: ck.meta.mode,
                psnr: mean(rows.iter().map(|r| r.psnr)).unwrap_or(f64::NAN),
                masked_psnr: mean(rows.iter().filter_map(|r| r.masked_psnr)),
                ssim: mean(rows.iter().map(|r| r.ssim)).unwrap_or(f64::NAN),
                rot_err: mean(rows.iter().map(|r| r.rot_err)).unwrap_or(f64::NAN),
                trans_err: mean(rows.iter().map(|r| r.trans_err)).unwrap_or(f64::NAN),
            });
        }
    }
    Ok(EvalReport {
        kind,
        models: checkpoints
            .iter()
            .map(|ck| ModelProvenance {
                mode: ck.meta.mode,
                checkpoint_sha256: ck.hash().to_string(),
                schedule: ck.meta.schedule,
                train_seeds: ck.train_seeds(),
                train_seed: ck.meta.train.seed,
            })
            .collect(),
        eval: spec.clone(),
        dataset: data.clone(),
        clips,
        series,
        scaffold,
    })
}
