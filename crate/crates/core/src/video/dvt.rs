//! DVT container: a fixed 24-byte little-endian header followed by a
//! row-major, frame-major payload.
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `DVT1`               |
//! | 4      | 2    | version (u16, currently 1) |
//! | 6      | 2    | dtype (u16: 0 = u8, 1 = f32) |
//! | 8      | 16   | T, C, H, W (u32 each)      |
//! | 24     | …    | payload                    |

use std::fs;
use std::path::Path;

use super::Clip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DVT_MAGIC: &[u8; 4] = b"DVT1";
pub const DVT_VERSION: u16 = 1;
pub const DVT_HEADER_LEN: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub enum DvtPayload {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl DvtPayload {
    fn dtype(&self) -> u16 {
        match self {
            DvtPayload::U8(_) => 0,
            DvtPayload::F32(_) => 1,
        }
    }

    fn len(&self) -> usize {
        match self {
            DvtPayload::U8(v) => v.len(),
            DvtPayload::F32(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DvtTensor {
    /// `[T, C, H, W]`
    pub dims: [usize; 4],
    pub payload: DvtPayload,
}

impl DvtTensor {
    pub fn from_clip(clip: &Clip) -> Self {
        DvtTensor {
            dims: [clip.len(), Clip::CHANNELS, clip.height(), clip.width()],
            payload: DvtPayload::U8(clip.bytes().to_vec()),
        }
    }

    pub fn from_tensor<S: Scalar>(x: &Tensor<S>) -> Result<Self> {
        let (t, c, h, w) = x.tchw()?;
        Ok(DvtTensor {
            dims: [t, c, h, w],
            payload: DvtPayload::F32(x.data().iter().map(|v| v.to_f32().unwrap()).collect()),
        })
    }

    /// A u8 payload with three channels as a [`Clip`].
    pub fn into_clip(self) -> Result<Clip> {
        let [t, c, h, w] = self.dims;
        if c != Clip::CHANNELS {
            return Err(Error::Shape {
                op: "dvt clip",
                axis: "channels",
                expected: Clip::CHANNELS,
                found: c,
            });
        }
        match self.payload {
            DvtPayload::U8(bytes) => Clip::new(t, h, w, bytes),
            DvtPayload::F32(_) => Err(Error::invalid("dvt clip", "payload is f32, expected u8")),
        }
    }

    /// Real values: u8 payloads are scaled by 1/255, f32 payloads kept as is.
    pub fn to_tensor<S: Scalar>(&self) -> Result<Tensor<S>> {
        let data = match &self.payload {
            DvtPayload::U8(v) => v.iter().map(|&b| S::lit(b as f64 / 255.0)).collect(),
            DvtPayload::F32(v) => v.iter().map(|&f| S::lit(f as f64)).collect(),
        };
        Tensor::new(&self.dims, data)
    }
}

pub fn encode_dvt(x: &DvtTensor) -> Result<Vec<u8>> {
    let n: usize = x.dims.iter().product();
    if n != x.payload.len() {
        return Err(Error::Shape {
            op: "write_dvt",
            axis: "payload",
            expected: n,
            found: x.payload.len(),
        });
    }
    let mut out = Vec::with_capacity(DVT_HEADER_LEN + 4 * n);
    out.extend_from_slice(DVT_MAGIC);
    out.extend_from_slice(&DVT_VERSION.to_le_bytes());
    out.extend_from_slice(&x.payload.dtype().to_le_bytes());
    for d in x.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("write_dvt", "extent exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &x.payload {
        DvtPayload::U8(v) => out.extend_from_slice(v),
        DvtPayload::F32(v) => {
            if v.iter().any(|f| !f.is_finite()) {
                return Err(Error::NonFinite { op: "write_dvt" });
            }
            for f in v {
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_dvt(bytes: &[u8], path: &Path) -> Result<DvtTensor> {
    if bytes.len() < DVT_HEADER_LEN {
        return Err(Error::format(path, "short header"));
    }
    if &bytes[..4] != DVT_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != DVT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let dims = [u32_at(8), u32_at(12), u32_at(16), u32_at(20)];
    let n: usize = dims.iter().product();
    let body = &bytes[DVT_HEADER_LEN..];
    let payload = match u16_at(6) {
        0 => {
            if body.len() != n {
                return Err(Error::format(
                    path,
                    format!("payload {} bytes, expected {n}", body.len()),
                ));
            }
            DvtPayload::U8(body.to_vec())
        }
        1 => {
            if body.len() != 4 * n {
                return Err(Error::format(
                    path,
                    format!("payload {} bytes, expected {}", body.len(), 4 * n),
                ));
            }
            DvtPayload::F32(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        d => return Err(Error::format(path, format!("unknown dtype code {d}"))),
    };
    Ok(DvtTensor { dims, payload })
}

pub fn write_dvt(x: &DvtTensor, path: &Path) -> Result<()> {
    let bytes = encode_dvt(x)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dvt(path: &Path) -> Result<DvtTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dvt(&bytes, path)
}
