//! Desk-scale novel view synthesis with time-gated dual conditioning.
//!
//! The pipeline lifts a source video into per-frame point clouds, re-renders
//! them along a target camera path (the *scaffold*), and samples a flow-matching
//! denoiser whose conditioning switches from the scaffold to the source video
//! once the noise level drops below a threshold.

pub mod clip;
pub mod geom;
pub mod traj;
pub mod synth;
pub mod codec;
pub mod gate;
pub mod denoiser;
pub mod dataset;
pub mod trainer;
pub mod sampler;
pub mod evalkit;
pub mod io;
pub mod checkpoint;
pub mod config;
pub mod pipeline;
