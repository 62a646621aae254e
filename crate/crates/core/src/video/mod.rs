//! Frame-sequence ingestion and emission.
//!
//! Clips are stored as raw `T×3×H×W` bytes. Conversion to reals in `[0, 1]`
//! is done by the consumer through [`Clip::to_tensor`].

mod dvt;
mod ppm;

pub use dvt::{
    decode_dvt, encode_dvt, read_dvt, write_dvt, DvtPayload, DvtTensor, DVT_HEADER_LEN, DVT_MAGIC, DVT_VERSION,
};
pub use ppm::{decode_ppm, encode_ppm, read_ppm_sequence, write_ppm_sequence};

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    frames: Vec<u8>,
    t: usize,
    h: usize,
    w: usize,
    pub fps: Option<f64>,
    pub source_path: String,
}

impl Clip {
    pub const CHANNELS: usize = 3;

    pub fn new(t: usize, h: usize, w: usize, frames: Vec<u8>) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("clip", format!("empty extent {t}x{h}x{w}")));
        }
        let expected = t * Self::CHANNELS * h * w;
        if frames.len() != expected {
            return Err(Error::Shape {
                op: "clip",
                axis: "data",
                expected,
                found: frames.len(),
            });
        }
        Ok(Clip {
            frames,
            t,
            h,
            w,
            fps: None,
            source_path: String::new(),
        })
    }

    pub fn with_source(mut self, path: impl Into<String>) -> Self {
        self.source_path = path.into();
        self
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn bytes(&self) -> &[u8] {
        &self.frames
    }

    /// Planar `3×H×W` bytes of frame `t`.
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = Self::CHANNELS * self.h * self.w;
        &self.frames[t * n..(t + 1) * n]
    }

    /// Real-valued `T×3×H×W` tensor scaled to `[0, 1]`.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let inv = S::lit(1.0 / 255.0);
        Tensor::from_parts(
            vec![self.t, Self::CHANNELS, self.h, self.w],
            self.frames.iter().map(|&b| S::from_u8(b).unwrap() * inv).collect(),
        )
    }

    /// Quantizes a `T×3×H×W` tensor in `[0, 1]` (values clamped) to bytes.
    pub fn from_unit_tensor<S: Scalar>(x: &Tensor<S>) -> Result<Self> {
        let (t, c, h, w) = x.tchw()?;
        if c != Self::CHANNELS {
            return Err(Error::Shape {
                op: "clip",
                axis: "channels",
                expected: Self::CHANNELS,
                found: c,
            });
        }
        let bytes = x
            .data()
            .iter()
            .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Clip::new(t, h, w, bytes)
    }

    /// Loads a clip from a directory of P6 frames or a `.dvt` file.
    /// Float DVT payloads are read as `[0, 1]` reals and quantized.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            return read_ppm_sequence(path);
        }
        let dvt = read_dvt(path)?;
        let clip = match dvt.payload {
            DvtPayload::U8(_) => dvt.into_clip()?,
            DvtPayload::F32(_) => Clip::from_unit_tensor(&dvt.to_tensor::<f32>()?)?,
        };
        Ok(clip.with_source(path.display().to_string()))
    }
}

/// Picks `num_frames` frames at `0, interval, 2·interval, …`, wrapping
/// cyclically (index mod `T`) once the source is exhausted.
pub fn sample_indices(len: usize, num_frames: usize, interval: usize) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::invalid("sample_clip", "empty clip"));
    }
    if num_frames == 0 || interval == 0 {
        return Err(Error::invalid("sample_clip", "num_frames and interval must be >= 1"));
    }
    Ok((0..num_frames).map(|k| (k * interval) % len).collect())
}

pub fn sample_clip(clip: &Clip, num_frames: usize, interval: usize) -> Result<Clip> {
    let idx = sample_indices(clip.len(), num_frames, interval)?;
    let mut bytes = Vec::with_capacity(num_frames * clip.frame(0).len());
    for i in idx {
        bytes.extend_from_slice(clip.frame(i));
    }
    let mut out = Clip::new(num_frames, clip.h, clip.w, bytes)?;
    out.fps = clip.fps;
    out.source_path = clip.source_path.clone();
    Ok(out)
}
