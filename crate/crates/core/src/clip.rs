//! Dense per-frame color and depth buffers.
//!
//! Layout is row-major `[frame][row][col]` with color interleaved as RGB.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClipError {
    #[error("buffer length {actual} does not match {frames}x{height}x{width}x{channels} = {expected}")]
    Length {
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("clip must have at least one frame and nonzero size")]
    Empty,
    #[error("color value {value} at index {index} is outside [0, 1] or not finite")]
    ColorRange { index: usize, value: f64 },
    #[error("depth value {value} at index {index} is not finite and positive")]
    Depth { index: usize, value: f64 },
    #[error("frame index {index} out of range for {frames} frames")]
    FrameIndex { index: usize, frames: usize },
}

fn check_len(
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    actual: usize,
) -> Result<(), ClipError> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(ClipError::Empty);
    }
    let expected = frames * height * width * channels;
    if expected != actual {
        return Err(ClipError::Length {
            frames,
            height,
            width,
            channels,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `N x H x W x 3` color video with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VideoClip {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, ClipError> {
        check_len(frames, height, width, 3, data.len())?;
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(ClipError::ColorRange { index, value });
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn black(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width * 3],
        }
    }

    /// Stacks single frames (each `H x W x 3`) into a clip.
    pub fn from_frames(height: usize, width: usize, frames: Vec<Vec<f64>>) -> Result<Self, ClipError> {
        let n = frames.len();
        let data: Vec<f64> = frames.into_iter().flatten().collect();
        Self::new(n, height, width, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let len = self.frame_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn pixel(&self, frame: usize, row: usize, col: usize) -> [f64; 3] {
        let o = ((frame * self.height + row) * self.width + col) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn same_shape(&self, other: &VideoClip) -> bool {
        self.frames == other.frames && self.height == other.height && self.width == other.width
    }

    /// Replicates a single frame `n` times (a stationary video).
    pub fn repeat_frame(&self, index: usize, n: usize) -> Result<Self, ClipError> {
        if index >= self.frames {
            return Err(ClipError::FrameIndex {
                index,
                frames: self.frames,
            });
        }
        let frame = self.frame(index);
        let mut data = Vec::with_capacity(frame.len() * n);
        for _ in 0..n {
            data.extend_from_slice(frame);
        }
        Self::new(n, self.height, self.width, data)
    }
}

/// `N x H x W` metric depth, strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthClip {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthClip {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, ClipError> {
        check_len(frames, height, width, 1, data.len())?;
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v <= 0.0)
        {
            return Err(ClipError::Depth { index, value });
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn from_frames(height: usize, width: usize, frames: Vec<Vec<f64>>) -> Result<Self, ClipError> {
        let n = frames.len();
        let data: Vec<f64> = frames.into_iter().flatten().collect();
        Self::new(n, height, width, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let len = self.height * self.width;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn repeat_frame(&self, index: usize, n: usize) -> Result<Self, ClipError> {
        if index >= self.frames {
            return Err(ClipError::FrameIndex {
                index,
                frames: self.frames,
            });
        }
        let frame = self.frame(index);
        let mut data = Vec::with_capacity(frame.len() * n);
        for _ in 0..n {
            data.extend_from_slice(frame);
        }
        Self::new(n, self.height, self.width, data)
    }
}

/// Rendered target-view frames plus per-pixel validity and depth buffer.
///
/// Invalid pixels are black with an infinite z-buffer entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldClip {
    pub frames: VideoClip,
    pub validity: Vec<bool>,
    pub zbuffer: Vec<f64>,
}

impl ScaffoldClip {
    pub fn n_frames(&self) -> usize {
        self.frames.frames()
    }

    pub fn valid_fraction(&self) -> f64 {
        let valid = self.validity.iter().filter(|v| **v).count();
        valid as f64 / self.validity.len() as f64
    }

    pub fn frame_validity(&self, i: usize) -> &[bool] {
        let len = self.frames.height() * self.frames.width();
        &self.validity[i * len..(i + 1) * len]
    }

    /// Per-pixel mask of holes (pixels that received no splat).
    pub fn invalid_mask(&self) -> Vec<bool> {
        self.validity.iter().map(|v| !v).collect()
    }
}
