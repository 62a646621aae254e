use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bilinear upsampling by an integer factor (half-pixel centres,
/// `align_corners = false`).
///
/// Output sample `d` reads source coordinate `(d + 0.5) / factor - 0.5`,
/// clamped to `[0, n - 1]`, and blends its two neighbours linearly.
pub fn upsample_bilinear<S: Scalar>(x: &Tensor<S>, factor: usize) -> Result<Tensor<S>> {
    if factor == 0 {
        return Err(Error::invalid("upsample_bilinear", "factor must be >= 1"));
    }
    let (_, h, w) = x.chw()?;
    resize_bilinear(x, h * factor, w * factor)
}

/// Bilinear resize to an arbitrary `out_h × out_w` with the same convention.
pub fn resize_bilinear<S: Scalar>(x: &Tensor<S>, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    let (c, h, w) = x.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize_bilinear", "empty output"));
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, S)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, S::lit(src - i0 as f64))
            })
            .collect()
    };
    let ys = taps(h, out_h);
    let xs = taps(w, out_w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for plane in x.data().chunks_exact(h * w) {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (S::one() - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (S::one() - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (S::one() - fy) + bot * fy);
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, out_h, out_w], out))
}
