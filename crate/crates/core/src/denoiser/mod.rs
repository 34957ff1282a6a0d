//! Velocity network over frame-concatenated latent videos.
//!
//! Per frame: 3x3 conv -> SiLU (plus noise-level and frame-position biases),
//! then single-head attention across frames at each spatial site (residual,
//! with a learned logit bias per query/key frame pair), then 3x3 conv -> SiLU
//! and a linear 3x3 output conv. A noise-level-gated per-channel skip adds each
//! input block's aligned frame to the output. The prediction covers the first
//! `frames` input frames only. Gradients are derived by hand.

mod ops;

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::LatentClip;
use crate::gate::ModelInput;
use ops::{add_row_sums, col2im, gemm, im2col, silu, silu_grad, Mat};

#[derive(Debug, Error, PartialEq)]
pub enum DenoiserError {
    #[error("invalid denoiser config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parameter vector has {actual} values, layout needs {expected}")]
    ParamCount { expected: usize, actual: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite loss for sample {sample}")]
    NonFinite { sample: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Latent channels `c`.
    pub channels: usize,
    /// Output frames `n`; the input carries `n * (1 + context_blocks)` frames.
    pub frames: usize,
    pub context_blocks: usize,
    pub hidden: usize,
    /// Width of the sinusoidal noise-level embedding (even).
    pub embed_dim: usize,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: &str| Err(DenoiserError::Config(m.to_string()));
        if self.channels == 0 || self.frames == 0 || self.hidden == 0 {
            return bad("channels, frames and hidden must be positive");
        }
        if !(1..=2).contains(&self.context_blocks) {
            return bad("context_blocks must be 1 or 2");
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return bad("embed_dim must be even and at least 2");
        }
        Ok(())
    }

    pub fn input_frames(&self) -> usize {
        self.frames * (1 + self.context_blocks)
    }

    pub fn layout(&self) -> Vec<ParamSpec> {
        let (c, w, e, f) = (self.channels, self.hidden, self.embed_dim, self.input_frames());
        let (n, b) = (self.frames, 1 + self.context_blocks);
        let shapes: [(&'static str, Vec<usize>); 15] = [
            ("conv1.weight", vec![9 * c, w]),
            ("conv1.bias", vec![w]),
            ("time1.weight", vec![e, w]),
            ("frame_pos", vec![f, w]),
            ("attn.query", vec![w, w]),
            ("attn.key", vec![w, w]),
            ("attn.value", vec![w, w]),
            ("attn.out", vec![w, w]),
            ("attn.bias", vec![n, f]),
            ("conv2.weight", vec![9 * w, w]),
            ("conv2.bias", vec![w]),
            ("time2.weight", vec![e, w]),
            ("out.weight", vec![9 * w, c]),
            ("out.bias", vec![c]),
            ("skip.weight", vec![b, e, c]),
        ];
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let spec = ParamSpec { name, shape, offset };
                offset += len;
                spec
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(ParamSpec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Index ranges of each tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Slots {
    conv1_w: Range<usize>,
    conv1_b: Range<usize>,
    time1: Range<usize>,
    pos: Range<usize>,
    wq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
    wo: Range<usize>,
    attn_b: Range<usize>,
    conv2_w: Range<usize>,
    conv2_b: Range<usize>,
    time2: Range<usize>,
    out_w: Range<usize>,
    out_b: Range<usize>,
    skip: Range<usize>,
}

impl Slots {
    fn new(cfg: &DenoiserConfig) -> Self {
        let r: Vec<Range<usize>> = cfg.layout().iter().map(ParamSpec::range).collect();
        Self {
            conv1_w: r[0].clone(),
            conv1_b: r[1].clone(),
            time1: r[2].clone(),
            pos: r[3].clone(),
            wq: r[4].clone(),
            wk: r[5].clone(),
            wv: r[6].clone(),
            wo: r[7].clone(),
            attn_b: r[8].clone(),
            conv2_w: r[9].clone(),
            conv2_b: r[10].clone(),
            time2: r[11].clone(),
            out_w: r[12].clone(),
            out_b: r[13].clone(),
            skip: r[14].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    config: DenoiserConfig,
    values: Vec<f64>,
}

impl DenoiserParams {
    pub fn from_values(config: DenoiserConfig, values: Vec<f64>) -> Result<Self, DenoiserError> {
        config.validate()?;
        let expected = config.param_count();
        if values.len() != expected {
            return Err(DenoiserError::ParamCount {
                expected,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DenoiserError::Config("parameters must be finite".into()));
        }
        Ok(Self { config, values })
    }

    pub fn zeros(config: DenoiserConfig) -> Result<Self, DenoiserError> {
        config.validate()?;
        let n = config.param_count();
        Ok(Self {
            config,
            values: vec![0.0; n],
        })
    }

    /// Seeded scaled-Gaussian initialisation; biases and skips start at zero.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self, DenoiserError> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, w, e) = (config.channels as f64, config.hidden as f64, config.embed_dim as f64);
        let s = Slots::new(&config);
        let fills = [
            (s.conv1_w, (2.0 / (9.0 * c)).sqrt()),
            (s.time1, 1.0 / e.sqrt()),
            (s.pos, 0.5),
            (s.wq, 1.0 / w.sqrt()),
            (s.wk, 1.0 / w.sqrt()),
            (s.wv, 1.0 / w.sqrt()),
            (s.wo, 0.5 / w.sqrt()),
            (s.conv2_w, (2.0 / (9.0 * w)).sqrt()),
            (s.time2, 1.0 / e.sqrt()),
            (s.out_w, 0.1 / (9.0 * w).sqrt()),
        ];
        for (range, std) in fills {
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in &mut p.values[range] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sinusoidal features of the noise level, frequencies geometric in `[1, 100]`.
pub fn noise_embedding(u: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = if half > 1 {
            100f64.powf(k as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        out[k] = (freq * u).sin();
        out[half + k] = (freq * u).cos();
    }
    out
}

/// One flow-matching training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub z0: LatentClip,
    pub z1: LatentClip,
    /// Flow time, `t = 1` at data.
    pub t: f64,
    pub z_t: LatentClip,
    pub v_target: LatentClip,
}

impl FlowSample {
    pub fn new(z0: LatentClip, z1: LatentClip, t: f64) -> Self {
        let z_t = z0.axpby(1.0 - t, &z1, t);
        let v_target = z1.axpby(1.0, &z0, -1.0);
        Self { z0, z1, t, z_t, v_target }
    }

    pub fn u(&self) -> f64 {
        1.0 - self.t
    }
}

/// Assembled model input, its noise level, and the regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub input: ModelInput,
    pub u: f64,
    pub target: LatentClip,
}

struct Dims {
    f_in: usize,
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    hid: usize,
}

impl Dims {
    fn site_count(&self) -> usize {
        self.h * self.w
    }
}

fn check_input(cfg: &DenoiserConfig, input: &ModelInput) -> Result<Dims, DenoiserError> {
    let [f_in, h, w, c] = input.frames.shape();
    if c != cfg.channels {
        return Err(DenoiserError::Shape(format!(
            "input has {c} channels, model expects {}",
            cfg.channels
        )));
    }
    if f_in != cfg.input_frames() || input.output.start != 0 || input.output.len != cfg.frames {
        return Err(DenoiserError::Shape(format!(
            "input has {f_in} frames with output slice {:?}, model expects {} frames with {} predicted",
            input.output,
            cfg.input_frames(),
            cfg.frames
        )));
    }
    Ok(Dims {
        f_in,
        n: cfg.frames,
        h,
        w,
        c,
        hid: cfg.hidden,
    })
}

/// Intermediate values kept for the backward pass.
struct Tape {
    emb: Vec<f64>,
    cols0: Vec<f64>,
    h1: Vec<f64>,
    a1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention weights, `[site, query frame, key frame]`.
    alpha: Vec<f64>,
    mixed: Vec<f64>,
    cols2: Vec<f64>,
    h3: Vec<f64>,
    cols3: Vec<f64>,
    y: Vec<f64>,
}

/// Per-block, per-channel skip gains at the current noise level.
fn skip_gains(pv: &[f64], s: &Slots, emb: &[f64], d: &Dims) -> Vec<f64> {
    let (e, blocks) = (emb.len(), d.f_in / d.n);
    let w = &pv[s.skip.clone()];
    let mut gains = vec![0.0; blocks * d.c];
    for (b, gain) in gains.chunks_exact_mut(d.c).enumerate() {
        gemm(Mat::new(emb, 1, e), Mat::new(&w[b * e * d.c..][..e * d.c], e, d.c), 0.0, gain);
    }
    gains
}

fn run_forward(p: &DenoiserParams, d: &Dims, x: &[f64], u: f64) -> Tape {
    let cfg = &p.config;
    let s = Slots::new(cfg);
    let pv = &p.values;
    let (hw, hid) = (d.site_count(), d.hid);
    let rows_all = d.f_in * hw;
    let rows_out = d.n * hw;

    let emb = noise_embedding(u, cfg.embed_dim);
    let mut tb1 = vec![0.0; hid];
    let mut tb2 = vec![0.0; hid];
    gemm(Mat::new(&emb, 1, emb.len()), Mat::new(&pv[s.time1.clone()], emb.len(), hid), 0.0, &mut tb1);
    gemm(Mat::new(&emb, 1, emb.len()), Mat::new(&pv[s.time2.clone()], emb.len(), hid), 0.0, &mut tb2);

    // Layer 1: every frame, noisy and context alike.
    let cols0 = im2col(x, d.f_in, d.h, d.w, d.c);
    let mut h1 = vec![0.0; rows_all * hid];
    gemm(Mat::new(&cols0, rows_all, 9 * d.c), Mat::new(&pv[s.conv1_w.clone()], 9 * d.c, hid), 0.0, &mut h1);
    let b1 = &pv[s.conv1_b.clone()];
    let pos = &pv[s.pos.clone()];
    for (r, row) in h1.chunks_exact_mut(hid).enumerate() {
        let f = r / hw;
        let pf = &pos[f * hid..(f + 1) * hid];
        for ch in 0..hid {
            row[ch] += b1[ch] + tb1[ch] + pf[ch];
        }
    }
    let a1: Vec<f64> = h1.iter().map(|&v| silu(v)).collect();

    // Frame attention; only the predicted frames issue queries.
    let mut q = vec![0.0; rows_out * hid];
    let mut k = vec![0.0; rows_all * hid];
    let mut v = vec![0.0; rows_all * hid];
    gemm(Mat::new(&a1[..rows_out * hid], rows_out, hid), Mat::new(&pv[s.wq.clone()], hid, hid), 0.0, &mut q);
    gemm(Mat::new(&a1, rows_all, hid), Mat::new(&pv[s.wk.clone()], hid, hid), 0.0, &mut k);
    gemm(Mat::new(&a1, rows_all, hid), Mat::new(&pv[s.wv.clone()], hid, hid), 0.0, &mut v);
    let scale = 1.0 / (hid as f64).sqrt();
    let mut alpha = vec![0.0; hw * d.n * d.f_in];
    let mut mixed = vec![0.0; rows_out * hid];
    let mut scores = vec![0.0; d.f_in];
    let bias = &pv[s.attn_b.clone()];
    for site in 0..hw {
        for fq in 0..d.n {
            let qr = &q[(fq * hw + site) * hid..][..hid];
            for (fk, sc) in scores.iter_mut().enumerate() {
                let kr = &k[(fk * hw + site) * hid..][..hid];
                *sc = scale * qr.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() + bias[fq * d.f_in + fk];
            }
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let a = &mut alpha[(site * d.n + fq) * d.f_in..][..d.f_in];
            let mut z = 0.0;
            for (ai, sc) in a.iter_mut().zip(&scores) {
                *ai = (sc - m).exp();
                z += *ai;
            }
            let out = &mut mixed[(fq * hw + site) * hid..][..hid];
            for (fk, ai) in a.iter_mut().enumerate() {
                *ai /= z;
                let vr = &v[(fk * hw + site) * hid..][..hid];
                for (o, vv) in out.iter_mut().zip(vr) {
                    *o += *ai * vv;
                }
            }
        }
    }
    let mut a2 = a1[..rows_out * hid].to_vec();
    gemm(Mat::new(&mixed, rows_out, hid), Mat::new(&pv[s.wo.clone()], hid, hid), 1.0, &mut a2);

    // Layer 2 and the linear head, predicted frames only.
    let cols2 = im2col(&a2, d.n, d.h, d.w, hid);
    let mut h3 = vec![0.0; rows_out * hid];
    gemm(Mat::new(&cols2, rows_out, 9 * hid), Mat::new(&pv[s.conv2_w.clone()], 9 * hid, hid), 0.0, &mut h3);
    let b2 = &pv[s.conv2_b.clone()];
    for row in h3.chunks_exact_mut(hid) {
        for ch in 0..hid {
            row[ch] += b2[ch] + tb2[ch];
        }
    }
    let a3: Vec<f64> = h3.iter().map(|&v| silu(v)).collect();
    let cols3 = im2col(&a3, d.n, d.h, d.w, hid);
    let mut y = vec![0.0; rows_out * d.c];
    for row in y.chunks_exact_mut(d.c) {
        row.copy_from_slice(&pv[s.out_b.clone()]);
    }
    gemm(Mat::new(&cols3, rows_out, 9 * hid), Mat::new(&pv[s.out_w.clone()], 9 * hid, d.c), 1.0, &mut y);
    let gains = skip_gains(pv, &s, &emb, d);
    for (block, gain) in gains.chunks_exact(d.c).enumerate() {
        let xb = &x[block * rows_out * d.c..][..rows_out * d.c];
        for (row, xr) in y.chunks_exact_mut(d.c).zip(xb.chunks_exact(d.c)) {
            for ch in 0..d.c {
                row[ch] += gain[ch] * xr[ch];
            }
        }
    }

    Tape {
        emb,
        cols0,
        h1,
        a1,
        q,
        k,
        v,
        alpha,
        mixed,
        cols2,
        h3,
        cols3,
        y,
    }
}

/// Gradient of all parameters given `dy`, the gradient at the prediction.
fn run_backward(p: &DenoiserParams, d: &Dims, x: &[f64], t: &Tape, dy: &[f64]) -> Vec<f64> {
    let s = Slots::new(&p.config);
    let pv = &p.values;
    let mut g = vec![0.0; pv.len()];
    let (hw, hid, c) = (d.site_count(), d.hid, d.c);
    let rows_all = d.f_in * hw;
    let rows_out = d.n * hw;
    let e = t.emb.len();

    // Skips.
    let gskip = &mut g[s.skip.clone()];
    for b in 0..d.f_in / d.n {
        let xb = &x[b * rows_out * c..][..rows_out * c];
        let mut dgain = vec![0.0; c];
        for (dr, xr) in dy.chunks_exact(c).zip(xb.chunks_exact(c)) {
            for ch in 0..c {
                dgain[ch] += dr[ch] * xr[ch];
            }
        }
        gemm(Mat::new(&t.emb, e, 1), Mat::new(&dgain, 1, c), 0.0, &mut gskip[b * e * c..][..e * c]);
    }

    // Output head.
    gemm(Mat::new(&t.cols3, rows_out, 9 * hid).t(), Mat::new(dy, rows_out, c), 0.0, &mut g[s.out_w.clone()]);
    add_row_sums(dy, c, &mut g[s.out_b.clone()]);
    let mut dcols3 = vec![0.0; rows_out * 9 * hid];
    gemm(Mat::new(dy, rows_out, c), Mat::new(&pv[s.out_w.clone()], 9 * hid, c).t(), 0.0, &mut dcols3);
    let mut da3 = vec![0.0; rows_out * hid];
    col2im(&dcols3, d.n, d.h, d.w, hid, &mut da3);

    // Layer 2.
    let dh3: Vec<f64> = da3.iter().zip(&t.h3).map(|(g, &h)| g * silu_grad(h)).collect();
    gemm(Mat::new(&t.cols2, rows_out, 9 * hid).t(), Mat::new(&dh3, rows_out, hid), 0.0, &mut g[s.conv2_w.clone()]);
    let mut sum3 = vec![0.0; hid];
    add_row_sums(&dh3, hid, &mut sum3);
    g[s.conv2_b.clone()].copy_from_slice(&sum3);
    gemm(Mat::new(&t.emb, e, 1), Mat::new(&sum3, 1, hid), 0.0, &mut g[s.time2.clone()]);
    let mut dcols2 = vec![0.0; rows_out * 9 * hid];
    gemm(Mat::new(&dh3, rows_out, hid), Mat::new(&pv[s.conv2_w.clone()], 9 * hid, hid).t(), 0.0, &mut dcols2);
    let mut da2 = vec![0.0; rows_out * hid];
    col2im(&dcols2, d.n, d.h, d.w, hid, &mut da2);

    // Attention; the residual passes da2 straight to a1.
    let mut da1 = vec![0.0; rows_all * hid];
    da1[..rows_out * hid].copy_from_slice(&da2);
    gemm(Mat::new(&t.mixed, rows_out, hid).t(), Mat::new(&da2, rows_out, hid), 0.0, &mut g[s.wo.clone()]);
    let mut dmixed = vec![0.0; rows_out * hid];
    gemm(Mat::new(&da2, rows_out, hid), Mat::new(&pv[s.wo.clone()], hid, hid).t(), 0.0, &mut dmixed);
    let scale = 1.0 / (hid as f64).sqrt();
    let mut dq = vec![0.0; rows_out * hid];
    let mut dk = vec![0.0; rows_all * hid];
    let mut dv = vec![0.0; rows_all * hid];
    let mut dalpha = vec![0.0; d.f_in];
    for site in 0..hw {
        for fq in 0..d.n {
            let a = &t.alpha[(site * d.n + fq) * d.f_in..][..d.f_in];
            let dm = &dmixed[(fq * hw + site) * hid..][..hid];
            for (fk, da) in dalpha.iter_mut().enumerate() {
                let vr = &t.v[(fk * hw + site) * hid..][..hid];
                *da = dm.iter().zip(vr).map(|(x, y)| x * y).sum();
                let dvr = &mut dv[(fk * hw + site) * hid..][..hid];
                for (o, x) in dvr.iter_mut().zip(dm) {
                    *o += a[fk] * x;
                }
            }
            let dot: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
            let qr = &t.q[(fq * hw + site) * hid..][..hid];
            for fk in 0..d.f_in {
                let dlogit = a[fk] * (dalpha[fk] - dot);
                g[s.attn_b.start + fq * d.f_in + fk] += dlogit;
                let ds = dlogit * scale;
                if ds == 0.0 {
                    continue;
                }
                let kr = &t.k[(fk * hw + site) * hid..][..hid];
                let dqr = &mut dq[(fq * hw + site) * hid..][..hid];
                for (o, x) in dqr.iter_mut().zip(kr) {
                    *o += ds * x;
                }
                let dkr = &mut dk[(fk * hw + site) * hid..][..hid];
                for (o, x) in dkr.iter_mut().zip(qr) {
                    *o += ds * x;
                }
            }
        }
    }
    let a1_out = Mat::new(&t.a1[..rows_out * hid], rows_out, hid);
    let a1_all = Mat::new(&t.a1, rows_all, hid);
    gemm(a1_out.t(), Mat::new(&dq, rows_out, hid), 0.0, &mut g[s.wq.clone()]);
    gemm(a1_all.t(), Mat::new(&dk, rows_all, hid), 0.0, &mut g[s.wk.clone()]);
    gemm(a1_all.t(), Mat::new(&dv, rows_all, hid), 0.0, &mut g[s.wv.clone()]);
    gemm(
        Mat::new(&dq, rows_out, hid),
        Mat::new(&pv[s.wq.clone()], hid, hid).t(),
        1.0,
        &mut da1[..rows_out * hid],
    );
    gemm(Mat::new(&dk, rows_all, hid), Mat::new(&pv[s.wk.clone()], hid, hid).t(), 1.0, &mut da1);
    gemm(Mat::new(&dv, rows_all, hid), Mat::new(&pv[s.wv.clone()], hid, hid).t(), 1.0, &mut da1);

    // Layer 1.
    let dh1: Vec<f64> = da1.iter().zip(&t.h1).map(|(g, &h)| g * silu_grad(h)).collect();
    gemm(Mat::new(&t.cols0, rows_all, 9 * c).t(), Mat::new(&dh1, rows_all, hid), 0.0, &mut g[s.conv1_w.clone()]);
    let mut sum1 = vec![0.0; hid];
    add_row_sums(&dh1, hid, &mut sum1);
    g[s.conv1_b.clone()].copy_from_slice(&sum1);
    gemm(Mat::new(&t.emb, e, 1), Mat::new(&sum1, 1, hid), 0.0, &mut g[s.time1.clone()]);
    let gpos = &mut g[s.pos.clone()];
    for f in 0..d.f_in {
        add_row_sums(&dh1[f * hw * hid..(f + 1) * hw * hid], hid, &mut gpos[f * hid..(f + 1) * hid]);
    }
    g
}

/// Velocity prediction for the first `frames` input frames at noise level `u`.
pub fn forward(params: &DenoiserParams, input: &ModelInput, u: f64) -> Result<LatentClip, DenoiserError> {
    let d = check_input(&params.config, input)?;
    let tape = run_forward(params, &d, input.frames.data(), u);
    LatentClip::new(d.n, d.h, d.w, d.c, tape.y).map_err(|e| DenoiserError::Shape(e.to_string()))
}

/// Mean squared error over every element of the batch and its exact gradient.
///
/// Per-sample gradients may be computed in parallel; they are summed in batch
/// order so the result does not depend on the thread count.
pub fn loss_and_grad(params: &DenoiserParams, batch: &[TrainItem]) -> Result<(f64, Vec<f64>), DenoiserError> {
    if batch.is_empty() {
        return Err(DenoiserError::EmptyBatch);
    }
    let dims = batch
        .iter()
        .map(|item| {
            let d = check_input(&params.config, &item.input)?;
            if item.target.shape() != [d.n, d.h, d.w, d.c] {
                return Err(DenoiserError::Shape(format!(
                    "target {:?} vs prediction {:?}",
                    item.target.shape(),
                    [d.n, d.h, d.w, d.c]
                )));
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total: usize = batch.iter().map(|b| b.target.data().len()).sum();
    let norm = 1.0 / total as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .zip(dims.par_iter())
        .map(|(item, d)| {
            let tape = run_forward(params, d, item.input.frames.data(), item.u);
            let diff: Vec<f64> = tape.y.iter().zip(item.target.data()).map(|(y, v)| y - v).collect();
            let sse: f64 = diff.iter().map(|x| x * x).sum();
            let dy: Vec<f64> = diff.iter().map(|x| 2.0 * norm * x).collect();
            (sse, run_backward(params, d, item.input.frames.data(), &tape, &dy))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (i, (sse, g)) in parts.into_iter().enumerate() {
        if !sse.is_finite() {
            return Err(DenoiserError::NonFinite { sample: i });
        }
        loss += sse;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss * norm, grad))
}
