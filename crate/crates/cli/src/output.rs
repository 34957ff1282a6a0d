//! Output directory that remembers every file it writes, so the manifest can
//! list each artifact with its hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use mocam_core::clip::VideoClip;
use mocam_core::io::{
    append_manifest, clip_tensor, io_err, sha256_hex, unix_now, write_ppm, write_tensor, Artifact, IoError,
    RunManifest, Tensor,
};

use crate::commands::Context;

pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    started: u64,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// `<stem>.mct` plus a `<stem>.ppm` preview.
    pub fn clip(&mut self, stem: &str, clip: &VideoClip) -> Result<(), IoError> {
        self.tensor(&format!("{stem}.mct"), &clip_tensor(clip))?;
        let ppm = self.path(&format!("{stem}.ppm"));
        write_ppm(&ppm, clip)?;
        self.written.push(ppm);
        Ok(())
    }

    /// `[frames, height, width]` 0/1 tensor plus a black-and-white preview.
    pub fn mask(&mut self, stem: &str, mask: &[bool], like: &VideoClip) -> Result<(), IoError> {
        let (n, h, w) = (like.frames(), like.height(), like.width());
        let values: Vec<f32> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        self.tensor(&format!("{stem}.mct"), &Tensor::f32(vec![n, h, w], values)?)?;
        let rgb = mask.iter().flat_map(|&m| [if m { 1.0 } else { 0.0 }; 3]).collect();
        let preview = VideoClip::new(n, h, w, rgb).expect("mask preview is in range");
        let ppm = self.path(&format!("{stem}.ppm"));
        write_ppm(&ppm, &preview)?;
        self.written.push(ppm);
        Ok(())
    }

    pub fn tensor(&mut self, name: &str, tensor: &Tensor) -> Result<(), IoError> {
        let p = self.path(name);
        write_tensor(&p, tensor)?;
        self.written.push(p);
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        self.written.push(p);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<(), IoError> {
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Format {
            path: p.clone(),
            message: e.to_string(),
        })?;
        self.text(name, &text)
    }

    /// Records a file written by other code.
    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    /// Appends the manifest entry for this run to the output directory.
    pub fn finish(self, ctx: &Context, inputs: &[PathBuf], seeds: serde_json::Value) -> Result<PathBuf, IoError> {
        let snapshot = ctx.cfg.to_toml();
        let config = serde_json::to_value(&ctx.cfg).map_err(|e| IoError::Format {
            path: ctx.config_path.clone(),
            message: e.to_string(),
        })?;
        let entry = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config,
            config_sha256: sha256_hex(snapshot.as_bytes()),
            seeds: json!({ "seed": ctx.cfg.seed, "details": seeds }),
            inputs: inputs.iter().map(|p| Artifact::of(p)).collect::<Result<_, _>>()?,
            outputs: self.written.iter().map(|p| Artifact::of(p)).collect::<Result<_, _>>()?,
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        append_manifest(&self.dir, &entry)
    }
}
