//! Exactly invertible video/latent mapping.
//!
//! `encode` folds each non-overlapping `f x f` pixel patch into the channel
//! axis (`c = 3 f²`); `decode` unfolds it. There is no temporal compression.

use thiserror::Error;

use crate::clip::{ClipError, VideoClip};

pub const DEFAULT_SPATIAL_FACTOR: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("{height}x{width} frames are not divisible by spatial factor {factor}")]
    Indivisible { height: usize, width: usize, factor: usize },
    #[error("spatial factor must be at least 1")]
    ZeroFactor,
    #[error("channel count {0} is not 3 * f^2 for an integer f")]
    MalformedChannels(usize),
    #[error("latent buffer length {actual} does not match {n}x{h}x{w}x{c}")]
    Length { n: usize, h: usize, w: usize, c: usize, actual: usize },
    #[error("latent value at index {0} is not finite")]
    NonFinite(usize),
    #[error(transparent)]
    Clip(#[from] ClipError),
}

/// `n x h x w x c` latent video, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClip {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl LatentClip {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, CodecError> {
        if data.len() != n * h * w * c {
            return Err(CodecError::Length {
                n,
                h,
                w,
                c,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CodecError::NonFinite(i));
        }
        Ok(Self { n, h, w, c, data })
    }

    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn zeros_like(other: &LatentClip) -> Self {
        Self::zeros(other.n, other.h, other.w, other.c)
    }

    pub fn frames(&self) -> usize {
        self.n
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `f` with `c = 3 f²`, if the channel count has that form.
    pub fn spatial_factor(&self) -> Option<usize> {
        spatial_factor_for_channels(self.c)
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &LatentClip, b: f64) -> LatentClip {
        assert_eq!(self.shape(), other.shape(), "latent shapes differ");
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        LatentClip {
            n: self.n,
            h: self.h,
            w: self.w,
            c: self.c,
            data,
        }
    }
}

pub fn spatial_factor_for_channels(c: usize) -> Option<usize> {
    if c == 0 || c % 3 != 0 {
        return None;
    }
    let sq = c / 3;
    let f = (sq as f64).sqrt().round() as usize;
    (f * f == sq).then_some(f)
}

pub fn encode(x: &VideoClip, spatial_factor: usize) -> Result<LatentClip, CodecError> {
    let f = spatial_factor;
    if f == 0 {
        return Err(CodecError::ZeroFactor);
    }
    let (n, hh, ww) = (x.frames(), x.height(), x.width());
    if hh % f != 0 || ww % f != 0 {
        return Err(CodecError::Indivisible {
            height: hh,
            width: ww,
            factor: f,
        });
    }
    let (h, w, c) = (hh / f, ww / f, 3 * f * f);
    let src = x.data();
    let mut data = vec![0.0; n * h * w * c];
    for t in 0..n {
        for i in 0..h {
            for j in 0..w {
                let base = ((t * h + i) * w + j) * c;
                for dy in 0..f {
                    for dx in 0..f {
                        let p = ((t * hh + i * f + dy) * ww + j * f + dx) * 3;
                        let q = base + (dy * f + dx) * 3;
                        data[q..q + 3].copy_from_slice(&src[p..p + 3]);
                    }
                }
            }
        }
    }
    Ok(LatentClip { n, h, w, c, data })
}

/// Inverse of [`encode`]. With `clamp` set, values are clipped to `[0, 1]`
/// (for model-generated latents); otherwise out-of-range values are an error.
pub fn decode(z: &LatentClip, clamp: bool) -> Result<VideoClip, CodecError> {
    let f = z.spatial_factor().ok_or(CodecError::MalformedChannels(z.c))?;
    let (n, h, w, c) = (z.n, z.h, z.w, z.c);
    let (hh, ww) = (h * f, w * f);
    let mut data = vec![0.0; n * hh * ww * 3];
    for t in 0..n {
        for i in 0..h {
            for j in 0..w {
                let base = ((t * h + i) * w + j) * c;
                for dy in 0..f {
                    for dx in 0..f {
                        let p = ((t * hh + i * f + dy) * ww + j * f + dx) * 3;
                        let q = base + (dy * f + dx) * 3;
                        data[p..p + 3].copy_from_slice(&z.data[q..q + 3]);
                    }
                }
            }
        }
    }
    if clamp {
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Ok(VideoClip::new(n, hh, ww, data)?)
}
