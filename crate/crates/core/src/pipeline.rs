//! End-to-end runs: one checkpoint per conditioning mode, evaluated together.

use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{DataError, SceneSource};
use crate::evalkit::{run_experiment, EvalError, EvalReport, ExperimentKind};
use crate::gate::ConditioningMode;
use crate::trainer::{train, StepMetrics, TrainError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no conditioning modes to train")]
    NoModes,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Trains `mode` on the configured scene distribution.
pub fn train_checkpoint(
    run: &RunConfig,
    mode: ConditioningMode,
    on_step: impl FnMut(&StepMetrics),
) -> Result<Checkpoint, PipelineError> {
    let cfg = run.train_config(mode);
    let source = SceneSource::new(run.dataset.clone())?;
    let state = train(&cfg, &source, on_step)?;
    Ok(Checkpoint::new(state.params, cfg, run.dataset.clone(), state.step))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub checkpoints: Vec<Checkpoint>,
    pub report: EvalReport,
}

/// Trains every configured mode with the same seed and budget, then runs the
/// ablation on the held-out scenes.
pub fn ablation(
    run: &RunConfig,
    mut on_step: impl FnMut(ConditioningMode, &StepMetrics),
) -> Result<AblationRun, PipelineError> {
    if run.ablation.modes.is_empty() {
        return Err(PipelineError::NoModes);
    }
    let checkpoints = run
        .ablation
        .modes
        .iter()
        .map(|&mode| train_checkpoint(run, mode, |m| on_step(mode, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = run_experiment(ExperimentKind::Ablation, &checkpoints, &run.dataset, &run.eval)?;
    Ok(AblationRun { checkpoints, report })
}
