//! Metrics and experiment drivers.

mod experiment;
mod metrics;
mod pose;

pub use experiment::{
    run_experiment, ClipRow, EvalReport, EvalSpec, ExperimentKind, ModelProvenance, ScaffoldRow, SeriesRow,
};
pub use metrics::{mse, psnr, ssim, SsimParams, PSNR_CAP_DB};
pub use pose::{estimate_pose, pose_errors, PoseGridSpec};

use thiserror::Error;

use crate::codec::CodecError;
use crate::dataset::DataError;
use crate::gate::GateError;
use crate::geom::GeomError;
use crate::sampler::SampleError;
use crate::synth::SynthError;
use crate::traj::TrajError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("{window}x{window} window does not fit {height}x{width} frames")]
    WindowTooLarge { window: usize, height: usize, width: usize },
    #[error("candidate pose grid is empty")]
    EmptyGrid,
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
