use std::path::PathBuf;

use serde_json::json;

use mocam_core::checkpoint::{Checkpoint, META_FILE, PARAMS_FILE};
use mocam_core::codec::{decode, encode};
use mocam_core::config::RunConfig;
use mocam_core::dataset::{benchmark_trajectory, SceneSource};
use mocam_core::evalkit::{psnr, run_experiment, EvalReport, ExperimentKind};
use mocam_core::gate::{ConditionPair, ConditioningMode};
use mocam_core::io::{IoError, Tensor};
use mocam_core::pipeline::{ablation, train_checkpoint};
use mocam_core::sampler::{sample as run_sampler, trace_to_text};
use mocam_core::synth::{default_source_pose, TrainingTriple};
use mocam_core::trainer::StepMetrics;

use crate::output::Outputs;
use crate::{load_checkpoints, CliError};

pub struct Context {
    pub name: &'static str,
    pub config_path: PathBuf,
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn outputs(&self) -> Result<Outputs, CliError> {
        Ok(Outputs::create(&self.out)?)
    }

    /// The configured held-out scene along its benchmark trajectory.
    fn scene_triple(&self) -> Result<TrainingTriple, CliError> {
        let d = &self.cfg.dataset;
        let traj = benchmark_trajectory(&self.cfg.scene.trajectory)?.build(default_source_pose(), d.frames)?;
        Ok(d.triple(self.cfg.scene.seed, &traj)?)
    }

    fn checkpoint_inputs(&self) -> Vec<PathBuf> {
        let mut inputs = vec![self.config_path.clone()];
        for dir in &self.cfg.checkpoints {
            inputs.push(dir.join(PARAMS_FILE));
            inputs.push(dir.join(META_FILE));
        }
        inputs
    }

    fn done(&self, out: Outputs, inputs: &[PathBuf], seeds: serde_json::Value) -> Result<(), CliError> {
        let manifest = out.finish(self, inputs, seeds)?;
        eprintln!("{}: wrote {}", self.name, manifest.display());
        Ok(())
    }
}

fn write_triple(out: &mut Outputs, prefix: &str, t: &TrainingTriple) -> Result<(), IoError> {
    out.clip(&format!("{prefix}source"), &t.source)?;
    out.clip(&format!("{prefix}target"), &t.target)?;
    write_scaffold(out, prefix, t)?;
    let d = &t.source_depth;
    out.tensor(
        &format!("{prefix}source_depth.mct"),
        &Tensor::f32(
            vec![d.frames(), d.height(), d.width()],
            d.data().iter().map(|&v| v as f32).collect(),
        )?,
    )?;
    out.text(&format!("{prefix}source_traj.txt"), &t.source_traj.to_text())?;
    out.text(&format!("{prefix}target_traj.txt"), &t.target_traj.to_text())
}

fn write_scaffold(out: &mut Outputs, prefix: &str, t: &TrainingTriple) -> Result<(), IoError> {
    let s = &t.scaffold;
    out.clip(&format!("{prefix}scaffold"), &s.frames)?;
    out.mask(&format!("{prefix}scaffold_validity"), &s.validity, &s.frames)?;
    let (n, h, w) = (s.frames.frames(), s.frames.height(), s.frames.width());
    out.tensor(
        &format!("{prefix}scaffold_depth.mct"),
        &Tensor::f32(vec![n, h, w], s.zbuffer.iter().map(|&v| v as f32).collect())?,
    )
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let source = SceneSource::new(ctx.cfg.dataset.clone())?;
    let mut out = ctx.outputs()?;
    let mut scene_seeds = Vec::new();
    for index in 0..ctx.cfg.gen.count {
        let triple = source.triple(index)?;
        write_triple(&mut out, &format!("example_{index:04}_"), &triple)?;
        let r = ctx.cfg.dataset.train_seeds;
        scene_seeds.push(r.start + index % r.count);
    }
    ctx.done(out, &[ctx.config_path.clone()], json!({ "scene_seeds": scene_seeds }))
}

pub fn render_scaffold(ctx: &Context) -> Result<(), CliError> {
    let triple = ctx.scene_triple()?;
    let mut out = ctx.outputs()?;
    out.clip("source", &triple.source)?;
    write_scaffold(&mut out, "", &triple)?;
    out.text("target_traj.txt", &triple.target_traj.to_text())?;
    eprintln!(
        "render-scaffold: scene {} along {}, {:.1}% of pixels valid",
        ctx.cfg.scene.seed,
        ctx.cfg.scene.trajectory,
        100.0 * triple.scaffold.valid_fraction()
    );
    ctx.done(out, &[ctx.config_path.clone()], json!({ "scene_seed": ctx.cfg.scene.seed }))
}

fn progress(mode: ConditioningMode, total: u64) -> impl FnMut(&StepMetrics) {
    move |m: &StepMetrics| {
        if m.step == 1 || m.step % 100 == 0 || m.step == total {
            eprintln!("train {mode}: step {}/{total} loss {:.5}", m.step, m.loss);
        }
    }
}

fn train_log(lines: &[(u64, f64, f64)]) -> String {
    let mut text = String::from("# step loss grad_norm\n");
    for (step, loss, norm) in lines {
        text.push_str(&format!("{step} {loss:?} {norm:?}\n"));
    }
    text
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let mode = ctx.cfg.schedule.mode;
    let mut log = Vec::new();
    let mut report = progress(mode, ctx.cfg.train.steps);
    let ck = train_checkpoint(&ctx.cfg, mode, |m| {
        log.push((m.step, m.loss, m.grad_norm));
        report(m);
    })?;
    let mut out = ctx.outputs()?;
    save_checkpoint(&mut out, "checkpoint", &ck)?;
    out.text("train_log.txt", &train_log(&log))?;
    let seeds = json!({ "train_seed": ctx.cfg.seed, "train_seeds": ctx.cfg.dataset.train_seeds });
    ctx.done(out, &[ctx.config_path.clone()], seeds)
}

fn save_checkpoint(out: &mut Outputs, name: &str, ck: &Checkpoint) -> Result<(), CliError> {
    let dir = out.path(name);
    ck.save(&dir)?;
    out.record(dir.join(PARAMS_FILE));
    out.record(dir.join(META_FILE));
    Ok(())
}

pub fn sample(ctx: &Context) -> Result<(), CliError> {
    let ck = Checkpoint::load(&ctx.cfg.checkpoints.first().cloned().ok_or_else(|| {
        CliError::Usage("sample needs a checkpoint in the config's checkpoints list".into())
    })?)?;
    ck.check_schedule(&ctx.cfg.schedule)?;
    let triple = ctx.scene_triple()?;
    let f = ctx.cfg.dataset.spatial_factor;
    let pair = ConditionPair::new(encode(&triple.scaffold.frames, f)?, encode(&triple.source, f)?)?;
    let (z, trace) = run_sampler(&ck.params, &pair, &ctx.cfg.sampler_config())?;
    let clip = decode(&z, true)?;
    let mut out = ctx.outputs()?;
    out.clip("sample", &clip)?;
    out.clip("target", &triple.target)?;
    out.clip("scaffold", &triple.scaffold.frames)?;
    out.text("sample.trace.txt", &trace_to_text(&trace))?;
    let metrics = json!({
        "psnr": psnr(&clip, &triple.target, None)?,
        "masked_psnr": psnr(&clip, &triple.target, Some(&triple.scaffold.invalid_mask())).ok(),
        "checkpoint_sha256": ck.hash(),
    });
    out.json("sample_metrics.json", &metrics)?;
    let seeds = json!({ "sampler_seed": ctx.cfg.seed, "scene_seed": ctx.cfg.scene.seed });
    ctx.done(out, &ctx.checkpoint_inputs(), seeds)
}

fn write_report(out: &mut Outputs, report: &EvalReport) -> Result<(), CliError> {
    let kind = report.kind.as_str();
    out.json(&format!("{kind}_report.json"), report)?;
    out.text(&format!("{kind}_series.csv"), &report.series_csv())?;
    out.text(&format!("{kind}_scaffold.csv"), &report.scaffold_csv())?;
    print!("{}", report.series_csv());
    Ok(())
}

fn eval_seeds(cfg: &RunConfig) -> serde_json::Value {
    json!({ "eval_seeds": cfg.eval.eval_seeds, "sampler_seed": "scene seed" })
}

pub fn eval(ctx: &Context) -> Result<(), CliError> {
    let cks = load_checkpoints(&ctx.cfg)?;
    let report = run_experiment(ExperimentKind::Ablation, &cks, &ctx.cfg.dataset, &ctx.cfg.eval)?;
    let mut out = ctx.outputs()?;
    write_report(&mut out, &report)?;
    ctx.done(out, &ctx.checkpoint_inputs(), eval_seeds(&ctx.cfg))
}

pub fn ablate(ctx: &Context) -> Result<(), CliError> {
    let mut logs: Vec<(ConditioningMode, Vec<(u64, f64, f64)>)> = Vec::new();
    let steps = ctx.cfg.train.steps;
    let run = ablation(&ctx.cfg, |mode, m| {
        if logs.last().map(|(last, _)| *last) != Some(mode) {
            logs.push((mode, Vec::new()));
        }
        logs.last_mut().expect("pushed above").1.push((m.step, m.loss, m.grad_norm));
        if m.step == 1 || m.step % 100 == 0 || m.step == steps {
            eprintln!("train {mode}: step {}/{steps} loss {:.5}", m.step, m.loss);
        }
    })?;
    let mut out = ctx.outputs()?;
    for ck in &run.checkpoints {
        save_checkpoint(&mut out, &format!("checkpoint_{}", ck.meta.mode), ck)?;
    }
    for (mode, log) in &logs {
        out.text(&format!("train_log_{mode}.txt"), &train_log(log))?;
    }
    write_report(&mut out, &run.report)?;
    let mut seeds = eval_seeds(&ctx.cfg);
    seeds["train_seed"] = json!(ctx.cfg.seed);
    seeds["train_seeds"] = json!(ctx.cfg.dataset.train_seeds);
    ctx.done(out, &[ctx.config_path.clone()], seeds)
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let cks = load_checkpoints(&ctx.cfg)?;
    let mut out = ctx.outputs()?;
    for kind in [ExperimentKind::MotionSweep, ExperimentKind::DepthSweep] {
        let report = run_experiment(kind, &cks, &ctx.cfg.dataset, &ctx.cfg.eval)?;
        write_report(&mut out, &report)?;
    }
    ctx.done(out, &ctx.checkpoint_inputs(), eval_seeds(&ctx.cfg))
}
