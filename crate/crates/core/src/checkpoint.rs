//! Trained parameters plus the metadata needed to use them safely.
//!
//! A checkpoint directory holds `params.mct` (rank-1 f64 tensor, so the round
//! trip is exact) and `checkpoint.json` (mode, schedule, layout, training
//! config and the parameter hash).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSpec, SeedRange};
use crate::denoiser::{DenoiserConfig, DenoiserParams};
use crate::gate::{ConditioningMode, ConditioningSchedule};
use crate::io::{io_err, read_tensor, sha256_hex, IoError, Tensor};
use crate::sampler::SampleError;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_SCHEMA: &str = "mocam-checkpoint/v1";
pub const PARAMS_FILE: &str = "params.mct";
pub const META_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub schema: String,
    pub mode: ConditioningMode,
    pub schedule: ConditioningSchedule,
    pub denoiser: DenoiserConfig,
    pub layout: Vec<ParamEntry>,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    pub steps_done: u64,
    pub params_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub meta: CheckpointMeta,
}

fn params_bytes(params: &DenoiserParams) -> Vec<u8> {
    Tensor::f64(vec![params.len()], params.values().to_vec())
        .expect("parameter vector is nonempty")
        .to_bytes()
}

impl Checkpoint {
    pub fn new(params: DenoiserParams, train: TrainConfig, dataset: DatasetSpec, steps_done: u64) -> Self {
        let denoiser = *params.config();
        let layout = denoiser
            .layout()
            .into_iter()
            .map(|s| ParamEntry {
                name: s.name.to_string(),
                shape: s.shape,
                offset: s.offset,
            })
            .collect();
        let meta = CheckpointMeta {
            schema: CHECKPOINT_SCHEMA.to_string(),
            mode: train.schedule.mode,
            schedule: train.schedule,
            denoiser,
            layout,
            params_sha256: sha256_hex(&params_bytes(&params)),
            train,
            dataset,
            steps_done,
        };
        Self { params, meta }
    }

    pub fn train_seeds(&self) -> SeedRange {
        self.meta.dataset.train_seeds
    }

    pub fn hash(&self) -> &str {
        &self.meta.params_sha256
    }

    /// Fails unless `schedule` asks for the mode this checkpoint was trained in.
    pub fn check_schedule(&self, schedule: &ConditioningSchedule) -> Result<(), SampleError> {
        if schedule.mode != self.meta.mode {
            return Err(SampleError::ModeMismatch {
                trained: self.meta.mode,
                requested: schedule.mode,
            });
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let bytes = params_bytes(&self.params);
        let p = dir.join(PARAMS_FILE);
        fs::write(&p, bytes).map_err(io_err(&p))?;
        let m = dir.join(META_FILE);
        let json = serde_json::to_string_pretty(&self.meta).map_err(|e| IoError::Format {
            path: m.clone(),
            message: e.to_string(),
        })?;
        fs::write(&m, json).map_err(io_err(&m))
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        let m = dir.join(META_FILE);
        let bad = |message: String| IoError::Format {
            path: m.clone(),
            message,
        };
        let text = fs::read_to_string(&m).map_err(io_err(&m))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if meta.schema != CHECKPOINT_SCHEMA {
            return Err(bad(format!("unsupported schema {:?}", meta.schema)));
        }
        let values = read_tensor(&dir.join(PARAMS_FILE))?.into_f64()?;
        let params = DenoiserParams::from_values(meta.denoiser, values).map_err(|e| bad(e.to_string()))?;
        let fresh = Checkpoint::new(params, meta.train.clone(), meta.dataset.clone(), meta.steps_done);
        if fresh.meta.params_sha256 != meta.params_sha256 {
            return Err(bad("parameter hash does not match the stored value".into()));
        }
        if fresh.meta != meta {
            return Err(bad("metadata is inconsistent with the parameter layout".into()));
        }
        Ok(fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_tensor;
    use crate::trainer::ModelSpec;

    fn checkpoint() -> Checkpoint {
        let train = TrainConfig {
            model: ModelSpec {
                hidden: 4,
                embed_dim: 4,
            },
            ..TrainConfig::default()
        };
        let cfg = train.model.denoiser_config([2, 2, 2, 12], &train.schedule);
        let params = DenoiserParams::init(cfg, 9).unwrap();
        Checkpoint::new(params, train, DatasetSpec::default(), 10)
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ck = checkpoint();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back, ck);
        assert!(back
            .params
            .values()
            .iter()
            .zip(ck.params.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn tampered_params_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ck = checkpoint();
        ck.save(dir.path()).unwrap();
        let mut values = ck.params.values().to_vec();
        values[0] += 1.0;
        write_tensor(&dir.path().join(PARAMS_FILE), &Tensor::f64(vec![values.len()], values).unwrap()).unwrap();
        assert!(matches!(Checkpoint::load(dir.path()), Err(IoError::Format { .. })));
    }

    #[test]
    fn mode_mismatch_is_reported() {
        let ck = checkpoint();
        assert!(ck.check_schedule(&ConditioningSchedule::default()).is_ok());
        let other = ConditioningSchedule::new(ConditioningMode::ScaffoldOnly, 0.85).unwrap();
        let err = ck.check_schedule(&other).unwrap_err();
        assert!(err.to_string().contains("structured"));
        assert!(err.to_string().contains("scaffold_only"));
    }
}
