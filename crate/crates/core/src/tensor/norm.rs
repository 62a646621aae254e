use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Added to the variance before the square root.
pub const NORM_EPS: f64 = 1e-12;

/// Per-channel affine applied after normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelNorm<S> {
    pub scale: Vec<S>,
    pub shift: Vec<S>,
}

impl<S: Scalar> ChannelNorm<S> {
    pub fn identity(channels: usize) -> Self {
        ChannelNorm {
            scale: vec![S::one(); channels],
            shift: vec![S::zero(); channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.scale.len() + self.shift.len()
    }
}

/// Normalizes each channel plane to zero mean and unit (population) variance,
/// then applies the affine. A constant plane maps to zeros before the affine.
pub fn normalize_layer<S: Scalar>(x: &Tensor<S>, norm: &ChannelNorm<S>) -> Result<Tensor<S>> {
    let (c, h, w) = x.chw()?;
    if norm.scale.len() != c {
        return Err(Error::Shape {
            op: "normalize_layer",
            axis: "channels",
            expected: norm.scale.len(),
            found: c,
        });
    }
    let n = h * w;
    if n < 2 {
        return Err(Error::invalid(
            "normalize_layer",
            "need at least 2 elements per channel",
        ));
    }
    let nf = S::from_usize_lossy(n);
    let eps = S::lit(NORM_EPS);
    let mut out = Vec::with_capacity(x.len());
    for (ch, plane) in x.data().chunks_exact(n).enumerate() {
        let (lo, hi) = plane
            .iter()
            .fold((plane[0], plane[0]), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo == hi {
            out.extend(std::iter::repeat_n(norm.shift[ch], n));
            continue;
        }
        let mean = plane.iter().copied().sum::<S>() / nf;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / nf;
        let inv = S::one() / (var + eps).sqrt();
        let (g, b) = (norm.scale[ch], norm.shift[ch]);
        out.extend(plane.iter().map(|&v| (v - mean) * inv * g + b));
    }
    Ok(Tensor::from_parts(vec![c, h, w], out))
}
