use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

/// Unpadded square-window pooling on a feature map.
pub fn pool2d<S: Scalar>(x: &Tensor<S>, kind: PoolKind, window: usize, stride: usize) -> Result<Tensor<S>> {
    let (c, h, w) = x.chw()?;
    if window == 0 || stride == 0 {
        return Err(Error::invalid("pool2d", "window and stride must be positive"));
    }
    if window > h || window > w {
        return Err(Error::Shape {
            op: "pool2d",
            axis: if window > h { "height" } else { "width" },
            expected: window,
            found: if window > h { h } else { w },
        });
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let inv = S::one() / S::from_usize_lossy(window * window);
    let mut out = Vec::with_capacity(c * oh * ow);
    for plane in x.data().chunks_exact(h * w) {
        for oy in 0..oh {
            for ox in 0..ow {
                let cells = (0..window).flat_map(|dy| {
                    let row = (oy * stride + dy) * w + ox * stride;
                    plane[row..row + window].iter().copied()
                });
                out.push(match kind {
                    PoolKind::Avg => cells.sum::<S>() * inv,
                    PoolKind::Max => cells.fold(S::neg_infinity(), S::max),
                });
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, oh, ow], out))
}
