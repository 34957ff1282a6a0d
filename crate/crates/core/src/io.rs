//! On-disk formats: binary tensors, PPM previews, content hashes and
//! append-only run manifests.
//!
//! Tensor layout (little-endian): `b"MCT1"`, dtype `u32` (0 = f32, 1 = f64),
//! rank `u32`, `rank` dims as `u64`, then the row-major payload.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clip::VideoClip;

pub const TENSOR_MAGIC: &[u8; 4] = b"MCT1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected \"MCT1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u32),
    #[error("truncated tensor: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} trailing bytes after tensor payload")]
    Trailing(usize),
    #[error("tensor dims {0:?} overflow the addressable size")]
    DimOverflow(Vec<u64>),
    #[error("tensor dims must be nonzero, got {0:?}")]
    ZeroDim(Vec<usize>),
    #[error("tensor holds {actual} values but dims {dims:?} need {expected}")]
    Length { dims: Vec<usize>, expected: usize, actual: usize },
    #[error("expected a {expected} tensor")]
    Dtype { expected: &'static str },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, IoError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(IoError::ZeroDim(dims));
        }
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| IoError::DimOverflow(dims.iter().map(|d| *d as u64).collect()))?;
        if data.len() != expected {
            return Err(IoError::Length {
                dims,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, IoError> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, IoError> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_f64(self) -> Result<Vec<f64>, IoError> {
        match self.data {
            TensorData::F64(v) => Ok(v),
            TensorData::F32(_) => Err(IoError::Dtype { expected: "f64" }),
        }
    }

    pub fn into_f32(self) -> Result<Vec<f32>, IoError> {
        match self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::F64(_) => Err(IoError::Dtype { expected: "f32" }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (tag, width) = match self.data {
            TensorData::F32(_) => (0u32, 4),
            TensorData::F64(_) => (1u32, 8),
        };
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + width * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let need = |expected: usize| {
            if bytes.len() < expected {
                Err(IoError::Truncated {
                    expected,
                    actual: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if &magic != TENSOR_MAGIC {
            return Err(IoError::BadMagic { found: magic });
        }
        need(12)?;
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let tag = u32_at(4);
        let width = match tag {
            0 => 4,
            1 => 8,
            other => return Err(IoError::UnknownDtype(other)),
        };
        let rank = u32_at(8) as usize;
        let header = 12usize
            .checked_add(rank.checked_mul(8).ok_or(IoError::DimOverflow(vec![]))?)
            .ok_or(IoError::DimOverflow(vec![]))?;
        need(header)?;
        let raw: Vec<u64> = (0..rank)
            .map(|i| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().expect("8 bytes")))
            .collect();
        let count = raw
            .iter()
            .try_fold(1usize, |acc, d| usize::try_from(*d).ok().and_then(|d| acc.checked_mul(d)))
            .ok_or_else(|| IoError::DimOverflow(raw.clone()))?;
        let expected = count
            .checked_mul(width)
            .and_then(|p| p.checked_add(header))
            .ok_or_else(|| IoError::DimOverflow(raw.clone()))?;
        need(expected)?;
        if bytes.len() > expected {
            return Err(IoError::Trailing(bytes.len() - expected));
        }
        let dims: Vec<usize> = raw.iter().map(|d| *d as usize).collect();
        let payload = &bytes[header..expected];
        let data = if tag == 0 {
            TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            )
        } else {
            TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            )
        };
        Self::new(dims, data)
    }
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<(), IoError> {
    fs::write(path, tensor.to_bytes()).map_err(io_err(path))
}

pub fn read_tensor(path: &Path) -> Result<Tensor, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Tensor::from_bytes(&bytes)
}

/// `[frames, height, width, 3]` f32 tensor of a clip.
pub fn clip_tensor(clip: &VideoClip) -> Tensor {
    Tensor::f32(
        vec![clip.frames(), clip.height(), clip.width(), 3],
        clip.data().iter().map(|v| *v as f32).collect(),
    )
    .expect("clip dims are nonzero")
}

/// Binary PPM of all frames side by side.
pub fn clip_ppm(clip: &VideoClip) -> Vec<u8> {
    let (n, h, w) = (clip.frames(), clip.height(), clip.width());
    let mut out = format!("P6\n{} {}\n255\n", n * w, h).into_bytes();
    for row in 0..h {
        for f in 0..n {
            for col in 0..w {
                for c in clip.pixel(f, row, col) {
                    out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    out
}

pub fn write_ppm(path: &Path, clip: &VideoClip) -> Result<(), IoError> {
    fs::write(path, clip_ppm(clip)).map_err(io_err(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self, IoError> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        })
    }
}

/// One manifest entry; entries are appended as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seeds: serde_json::Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn append_manifest(dir: &Path, entry: &RunManifest) -> Result<PathBuf, IoError> {
    let path = dir.join(MANIFEST_FILE);
    let mut line = serde_json::to_string(entry).map_err(|e| IoError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(io_err(&path))?;
    f.write_all(line.as_bytes()).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifests(dir: &Path) -> Result<Vec<RunManifest>, IoError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| IoError::Format {
                path: path.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}
