//! Dense row-major tensors and the forward kernels built on them.
//!
//! A rank-3 tensor is read as a `C×H×W` feature map and a rank-4 tensor as a
//! `T×C×H×W` frame stack. Every kernel here is a direct loop: deterministic,
//! allocation-light and easy to check against a naive reference.

mod activation;
mod conv;
mod gradcheck;
mod norm;
mod pool;
mod resample;

pub use activation::{activate, relu, sigmoid, Activation};
pub use conv::{conv2d, ConvNorm, ConvSpec};
pub use gradcheck::{grad_check, numeric_gradient, GRAD_CHECK_STEP};
pub use norm::{normalize_layer, ChannelNorm, NORM_EPS};
pub use pool::{pool2d, PoolKind};
pub use resample::{resize_bilinear, upsample_bilinear};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor, checking rank (1 to 4), length and finiteness.
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::invalid(
                "tensor",
                format!("rank must be 1..=4, got {}", shape.len()),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                axis: "data",
                expected,
                found: data.len(),
            });
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.ensure_finite("tensor")?;
        Ok(t)
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Mutable element access. Callers keep values finite.
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// `(C, H, W)` of a rank-3 feature map.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape {
                op: "feature map",
                axis: "rank",
                expected: 3,
                found: self.rank(),
            }),
        }
    }

    /// `(T, C, H, W)` of a rank-4 frame stack.
    pub fn tchw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [t, c, h, w] => Ok((t, c, h, w)),
            _ => Err(Error::Shape {
                op: "frame stack",
                axis: "rank",
                expected: 4,
                found: self.rank(),
            }),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() || shape.len() > 4 {
            return Err(Error::Shape {
                op: "reshape",
                axis: "data",
                expected: self.data.len(),
                found: n,
            });
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data))
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub(crate) fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape.len() != other.shape.len() {
            return Err(Error::Shape {
                op,
                axis: "rank",
                expected: self.shape.len(),
                found: other.shape.len(),
            });
        }
        const AXES: [&str; 4] = ["axis0", "axis1", "axis2", "axis3"];
        for (i, (&a, &b)) in self.shape.iter().zip(&other.shape).enumerate() {
            if a != b {
                return Err(Error::Shape {
                    op,
                    axis: AXES[i],
                    expected: a,
                    found: b,
                });
            }
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| T::lit(v.as_f64())).collect(),
        )
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> S {
        self.sum() / S::from_usize_lossy(self.data.len())
    }

    pub fn min(&self) -> S {
        self.data.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max(&self) -> S {
        self.data.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// One channel plane of a feature map.
    pub fn plane(&self, c: usize) -> &[S] {
        let (_, h, w) = self.chw().expect("plane() on a feature map");
        &self.data[c * h * w..(c + 1) * h * w]
    }

    /// Frame `t` of a `T×C×H×W` stack as a `C×H×W` map.
    pub fn frame(&self, t: usize) -> Tensor<S> {
        let (_, c, h, w) = self.tchw().expect("frame() on a frame stack");
        let n = c * h * w;
        Tensor::from_parts(vec![c, h, w], self.data[t * n..(t + 1) * n].to_vec())
    }

    /// Stacks equally shaped feature maps into a `T×C×H×W` tensor.
    pub fn stack(frames: &[Tensor<S>]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::invalid("stack", "no frames"))?;
        let (c, h, w) = first.chw()?;
        let mut data = Vec::with_capacity(frames.len() * first.len());
        for f in frames {
            first.same_shape(f, "stack")?;
            data.extend_from_slice(&f.data);
        }
        Ok(Tensor::from_parts(vec![frames.len(), c, h, w], data))
    }

    /// Concatenates two feature maps along channels (`a` first).
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        let (ca, h, w) = a.chw()?;
        let (cb, hb, wb) = b.chw()?;
        if (h, w) != (hb, wb) {
            return Err(Error::Shape {
                op: "concat",
                axis: if h != hb { "height" } else { "width" },
                expected: if h != hb { h } else { w },
                found: if h != hb { hb } else { wb },
            });
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Tensor::from_parts(vec![ca + cb, h, w], data))
    }

    /// Splits a feature map into two equal channel halves.
    pub fn split_channels(&self) -> Result<(Self, Self)> {
        let (c, h, w) = self.chw()?;
        if c % 2 != 0 {
            return Err(Error::invalid("split", format!("odd channel count {c}")));
        }
        let half = c / 2 * h * w;
        Ok((
            Tensor::from_parts(vec![c / 2, h, w], self.data[..half].to_vec()),
            Tensor::from_parts(vec![c / 2, h, w], self.data[half..].to_vec()),
        ))
    }

    /// Per-pixel mean over channels, as a `1×H×W` map.
    pub fn channel_mean(&self) -> Result<Self> {
        let (c, h, w) = self.chw()?;
        let n = h * w;
        let inv = S::one() / S::from_usize_lossy(c);
        let mut out = vec![S::zero(); n];
        for ch in 0..c {
            for (o, &v) in out.iter_mut().zip(&self.data[ch * n..(ch + 1) * n]) {
                *o = *o + v;
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        Ok(Tensor::from_parts(vec![1, h, w], out))
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean_of(items: &[Tensor<S>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid("mean", "no tensors"))?;
        let mut acc = vec![S::zero(); first.len()];
        for t in items {
            first.same_shape(t, "mean")?;
            for (a, &v) in acc.iter_mut().zip(&t.data) {
                *a = *a + v;
            }
        }
        let inv = S::one() / S::from_usize_lossy(items.len());
        acc.iter_mut().for_each(|v| *v = *v * inv);
        Ok(Tensor::from_parts(first.shape.clone(), acc))
    }
}

impl<S: Scalar> std::ops::Add for &Tensor<S> {
    type Output = Tensor<S>;

    fn add(self, rhs: Self) -> Tensor<S> {
        self.zip_map(rhs, "add", |a, b| a + b)
            .expect("tensor add with matching shapes")
    }
}
