//! Versioned TOML run configuration shared by every subcommand.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! anywhere are hard errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{benchmark_trajectory, check_held_out, DatasetSpec};
use crate::evalkit::EvalSpec;
use crate::gate::{ConditioningMode, ConditioningSchedule};
use crate::sampler::SamplerConfig;
use crate::trainer::{ModelSpec, Optimizer, TrainConfig};

pub const CONFIG_SCHEMA: &str = "mocam-config/v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config schema {found:?} is not supported, expected {CONFIG_SCHEMA:?}")]
    Schema { found: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub model: ModelSpec,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            steps: d.steps,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            optimizer: d.optimizer,
            model: d.model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_steps: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { n_steps: 20 }
    }
}

/// The single held-out scene used by `render-scaffold` and `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub seed: u64,
    pub trajectory: String,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            seed: 1_000_000,
            trajectory: "orbit_ccw_45".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    /// Number of training examples written by `gen-data`, from index 0.
    pub count: u64,
}

impl Default for GenSection {
    fn default() -> Self {
        Self { count: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub modes: Vec<ConditioningMode>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            modes: ConditioningMode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    /// Top-level seed: training initialisation and batches, and the `sample` noise.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: ConditioningSchedule,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub ablation: AblationSection,
    /// Checkpoint directories for `sample` (first entry), `eval` and `sweep`.
    /// Relative paths are resolved against the config file's directory.
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA.into(),
            seed: 0,
            schedule: ConditioningSchedule::default(),
            dataset: DatasetSpec::default(),
            train: TrainSection::default(),
            sampler: SamplerSection::default(),
            scene: SceneSection::default(),
            gen: GenSection::default(),
            eval: EvalSpec::default(),
            ablation: AblationSection::default(),
            checkpoints: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(ConfigError::Schema { found: cfg.schema });
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for ck in &mut cfg.checkpoints {
            if ck.is_relative() {
                *ck = base.join(&*ck);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Training config for `mode`, keeping the configured switch threshold.
    pub fn train_config(&self, mode: ConditioningMode) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer: self.train.optimizer,
            schedule: ConditioningSchedule {
                mode,
                u_switch: self.schedule.u_switch,
            },
            model: self.train.model,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_steps: self.sampler.n_steps,
            schedule: self.schedule,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.dataset.validate().map_err(|e| invalid(&e))?;
        for mode in self.ablation.modes.iter().copied().chain([self.schedule.mode]) {
            self.train_config(mode).validate().map_err(|e| invalid(&e))?;
        }
        self.sampler_config().validate().map_err(|e| invalid(&e))?;
        if self.eval.n_steps == 0 {
            return Err(ConfigError::Invalid("eval.n_steps must be at least 1".into()));
        }
        check_held_out(&self.dataset.train_seeds, &self.eval.eval_seeds).map_err(|e| invalid(&e))?;
        let names = self.eval.ablation_trajectories.iter().chain(&self.eval.sweep_trajectories);
        for name in names.chain([&self.scene.trajectory]) {
            benchmark_trajectory(name).map_err(|e| invalid(&e))?;
        }
        Ok(())
    }
}
