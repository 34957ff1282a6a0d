mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use mocam_core::checkpoint::Checkpoint;
use mocam_core::codec::CodecError;
use mocam_core::config::{ConfigError, RunConfig};
use mocam_core::dataset::DataError;
use mocam_core::evalkit::EvalError;
use mocam_core::gate::GateError;
use mocam_core::io::IoError;
use mocam_core::pipeline::PipelineError;
use mocam_core::sampler::SampleError;

#[derive(Parser)]
#[command(name = "mocam", version, about = "Camera-controlled video re-rendering at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write training triples (source, scaffold, target) with previews.
    GenData(Common),
    /// Render the scaffold of the configured scene and trajectory.
    RenderScaffold(Common),
    /// Train one checkpoint in the configured conditioning mode.
    Train(Common),
    /// Synthesize the configured scene with a trained checkpoint.
    Sample(Common),
    /// Evaluate checkpoints on the held-out ablation scenes.
    Eval(Common),
    /// Train every ablation mode, then evaluate them together.
    Ablate(Common),
    /// Motion-magnitude and depth-noise sweeps over trained checkpoints.
    Sweep(Common),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Name {
    GenData,
    RenderScaffold,
    Train,
    Sample,
    Eval,
    Ablate,
    Sweep,
}

impl Command {
    fn split(self) -> (Name, Common) {
        match self {
            Command::GenData(c) => (Name::GenData, c),
            Command::RenderScaffold(c) => (Name::RenderScaffold, c),
            Command::Train(c) => (Name::Train, c),
            Command::Sample(c) => (Name::Sample, c),
            Command::Eval(c) => (Name::Eval, c),
            Command::Ablate(c) => (Name::Ablate, c),
            Command::Sweep(c) => (Name::Sweep, c),
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: mocam-out/<subcommand>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MOCAM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("MOCAM_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(name: Name, common: Common) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = common
        .out
        .unwrap_or_else(|| PathBuf::from("mocam-out").join(name.as_str()));
    let ctx = commands::Context {
        name: name.as_str(),
        config_path: common.config,
        cfg,
        out,
    };
    match name {
        Name::GenData => commands::gen_data(&ctx),
        Name::RenderScaffold => commands::render_scaffold(&ctx),
        Name::Train => commands::train(&ctx),
        Name::Sample => commands::sample(&ctx),
        Name::Eval => commands::eval(&ctx),
        Name::Ablate => commands::ablate(&ctx),
        Name::Sweep => commands::sweep(&ctx),
    }
}

impl Name {
    fn as_str(&self) -> &'static str {
        match self {
            Name::GenData => "gen-data",
            Name::RenderScaffold => "render-scaffold",
            Name::Train => "train",
            Name::Sample => "sample",
            Name::Eval => "eval",
            Name::Ablate => "ablate",
            Name::Sweep => "sweep",
        }
    }
}

/// Loads every configured checkpoint, failing with a usage error if none is listed.
pub fn load_checkpoints(cfg: &RunConfig) -> Result<Vec<Checkpoint>, CliError> {
    if cfg.checkpoints.is_empty() {
        return Err(CliError::Usage("config lists no checkpoints".into()));
    }
    Ok(cfg
        .checkpoints
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<_, _>>()?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, common) = cli.command.split();
    match run(name, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
