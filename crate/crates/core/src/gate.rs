//! Time-gated conditioning: which condition latents accompany the noisy
//! latent at noise level `u`, and how they are stacked along the frame axis.
//!
//! Noise level `u = 1 - t` where `t` is flow time (`t = 1` at data). Under the
//! structured schedule the scaffold is active while `u > u_switch` and the
//! source takes over for `u <= u_switch`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::LatentClip;

pub const DEFAULT_U_SWITCH: f64 = 0.85;

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("u_switch {0} must lie in [0, 1]")]
    Threshold(f64),
    #[error("unknown conditioning mode {0:?} (expected structured, scaffold_only, scaffold_early or static_both)")]
    UnknownMode(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Scaffold while `u > u_switch`, then source.
    Structured,
    /// Scaffold at every noise level.
    ScaffoldOnly,
    /// Scaffold while `u > u_switch`, then the all-zero null block.
    ScaffoldEarly,
    /// Scaffold and source together at every noise level.
    StaticBoth,
}

impl ConditioningMode {
    pub const ALL: [ConditioningMode; 4] = [
        ConditioningMode::Structured,
        ConditioningMode::ScaffoldOnly,
        ConditioningMode::ScaffoldEarly,
        ConditioningMode::StaticBoth,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditioningMode::Structured => "structured",
            ConditioningMode::ScaffoldOnly => "scaffold_only",
            ConditioningMode::ScaffoldEarly => "scaffold_early",
            ConditioningMode::StaticBoth => "static_both",
        }
    }

    /// Number of condition blocks appended to the noisy latent.
    pub fn context_blocks(&self) -> usize {
        match self {
            ConditioningMode::StaticBoth => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditioningMode {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| GateError::UnknownMode(s.to_string()))
    }
}

/// Which condition is present at a given noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveCondition {
    Scaffold,
    Source,
    Null,
    Both,
}

impl ActiveCondition {
    pub const ALL: [ActiveCondition; 4] = [
        ActiveCondition::Scaffold,
        ActiveCondition::Source,
        ActiveCondition::Null,
        ActiveCondition::Both,
    ];

    pub fn index(&self) -> usize {
        match self {
            ActiveCondition::Scaffold => 0,
            ActiveCondition::Source => 1,
            ActiveCondition::Null => 2,
            ActiveCondition::Both => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningSchedule {
    pub mode: ConditioningMode,
    pub u_switch: f64,
}

impl Default for ConditioningSchedule {
    fn default() -> Self {
        Self {
            mode: ConditioningMode::Structured,
            u_switch: DEFAULT_U_SWITCH,
        }
    }
}

impl ConditioningSchedule {
    pub fn new(mode: ConditioningMode, u_switch: f64) -> Result<Self, GateError> {
        let s = Self { mode, u_switch };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if !(0.0..=1.0).contains(&self.u_switch) {
            return Err(GateError::Threshold(self.u_switch));
        }
        Ok(())
    }

    pub fn active(&self, u: f64) -> ActiveCondition {
        let early = u > self.u_switch;
        match self.mode {
            ConditioningMode::Structured if early => ActiveCondition::Scaffold,
            ConditioningMode::Structured => ActiveCondition::Source,
            ConditioningMode::ScaffoldOnly => ActiveCondition::Scaffold,
            ConditioningMode::ScaffoldEarly if early => ActiveCondition::Scaffold,
            ConditioningMode::ScaffoldEarly => ActiveCondition::Null,
            ConditioningMode::StaticBoth => ActiveCondition::Both,
        }
    }
}

/// Scaffold latent `c_ren`, source latent `c_src`, and the matching null block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionPair {
    c_ren: LatentClip,
    c_src: LatentClip,
    null: LatentClip,
    /// Per-latent-site scaffold coverage (fraction of valid pixels in the patch).
    pub scaffold_validity: Option<Vec<f64>>,
}

impl ConditionPair {
    pub fn new(c_ren: LatentClip, c_src: LatentClip) -> Result<Self, GateError> {
        if c_ren.shape() != c_src.shape() {
            return Err(GateError::Shape(format!(
                "scaffold latent {:?} vs source latent {:?}",
                c_ren.shape(),
                c_src.shape()
            )));
        }
        let null = LatentClip::zeros_like(&c_ren);
        Ok(Self {
            c_ren,
            c_src,
            null,
            scaffold_validity: None,
        })
    }

    pub fn c_ren(&self) -> &LatentClip {
        &self.c_ren
    }

    pub fn c_src(&self) -> &LatentClip {
        &self.c_src
    }

    pub fn shape(&self) -> [usize; 4] {
        self.c_ren.shape()
    }

    /// Condition blocks for an active condition, in frame-axis order.
    pub fn blocks(&self, active: ActiveCondition) -> Vec<&LatentClip> {
        match active {
            ActiveCondition::Scaffold => vec![&self.c_ren],
            ActiveCondition::Source => vec![&self.c_src],
            ActiveCondition::Null => vec![&self.null],
            ActiveCondition::Both => vec![&self.c_ren, &self.c_src],
        }
    }
}

/// Evaluates the gate: the active condition and its latent blocks.
pub fn gate<'a>(
    schedule: &ConditioningSchedule,
    u: f64,
    pair: &'a ConditionPair,
) -> (ActiveCondition, Vec<&'a LatentClip>) {
    let active = schedule.active(u);
    (active, pair.blocks(active))
}

/// Frames `[start, start + len)` of the model output are the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputSlice {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub frames: LatentClip,
    pub output: OutputSlice,
}

/// Concatenates `[z_u; blocks...]` along the frame axis.
pub fn assemble_input(z_u: &LatentClip, blocks: &[&LatentClip]) -> Result<ModelInput, GateError> {
    let [n, h, w, c] = z_u.shape();
    let mut data = Vec::with_capacity(z_u.data().len() * (1 + blocks.len()));
    data.extend_from_slice(z_u.data());
    let mut frames = n;
    for b in blocks {
        if b.height() != h || b.width() != w || b.channels() != c {
            return Err(GateError::Shape(format!(
                "context block {:?} vs noisy latent {:?}",
                b.shape(),
                z_u.shape()
            )));
        }
        data.extend_from_slice(b.data());
        frames += b.frames();
    }
    let frames = LatentClip::new(frames, h, w, c, data).map_err(|e| GateError::Shape(e.to_string()))?;
    Ok(ModelInput {
        frames,
        output: OutputSlice { start: 0, len: n },
    })
}
