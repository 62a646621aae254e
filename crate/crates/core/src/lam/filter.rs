use crate::error::{Error, Result};
use crate::init::ParamRng;
use crate::scalar::Scalar;
use crate::tensor::{conv2d, pool2d, relu, resize_bilinear, ConvNorm, ConvSpec, PoolKind, Tensor};

pub const DEFAULT_KERNEL_SIZE: usize = 5;

/// `relu(x + norm(conv(relu(norm(conv(x))))))`, channel count preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock<S> {
    pub first: ConvNorm<S>,
    pub second: ConvNorm<S>,
}

impl<S: Scalar> ResidualBlock<S> {
    pub fn init(channels: usize, rng: &mut ParamRng) -> Self {
        ResidualBlock {
            first: ConvNorm::init(channels, channels, rng),
            second: ConvNorm::init(channels, channels, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let inner = self.first.forward(x)?.map(relu);
        let inner = self.second.forward(&inner)?;
        Ok((x + &inner).map(relu))
    }

    pub fn param_count(&self) -> usize {
        self.first.param_count() + self.second.param_count()
    }
}

/// Weights that turn a gamma-adjusted map into per-pixel kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterGenerator<S> {
    pub channels: usize,
    /// Odd kernel extent `u_p`.
    pub kernel_size: usize,
    pub blocks: [ResidualBlock<S>; 2],
    /// 1×1 convolution to `u_p²` channels.
    pub head: ConvSpec<S>,
    /// Softmax-normalize each per-pixel kernel (convex weights).
    pub normalize: bool,
}

impl<S: Scalar> FilterGenerator<S> {
    pub fn init(channels: usize, kernel_size: usize, rng: &mut ParamRng) -> Result<Self> {
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(
                "filter generator",
                format!("kernel size {kernel_size} must be odd"),
            ));
        }
        Ok(FilterGenerator {
            channels,
            kernel_size,
            blocks: [ResidualBlock::init(channels, rng), ResidualBlock::init(channels, rng)],
            head: ConvSpec::init(channels, kernel_size * kernel_size, 1, 1, 0, rng),
            normalize: true,
        })
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(ResidualBlock::param_count).sum::<usize>() + self.head.param_count()
    }
}

/// One `u_p × u_p` kernel per pixel, stored `H × W × u_p²`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<S> {
    pub kernel_size: usize,
    pub height: usize,
    pub width: usize,
    pub kernels: Vec<S>,
    /// Whether each kernel is known to sum to one.
    pub normalized: bool,
}

impl<S: Scalar> FilterBank<S> {
    pub fn new(kernel_size: usize, height: usize, width: usize, kernels: Vec<S>) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::invalid("filter bank", "kernel size must be odd"));
        }
        let expected = height * width * kernel_size * kernel_size;
        if kernels.len() != expected {
            return Err(Error::Shape {
                op: "filter bank",
                axis: "kernels",
                expected,
                found: kernels.len(),
            });
        }
        if kernels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "filter bank" });
        }
        let taps = kernel_size * kernel_size;
        let tol = S::lit(1e-5);
        let normalized = kernels
            .chunks_exact(taps)
            .all(|k| (k.iter().copied().sum::<S>() - S::one()).abs() <= tol);
        Ok(FilterBank {
            kernel_size,
            height,
            width,
            kernels,
            normalized,
        })
    }

    /// Identity filter: weight 1 at the centre tap.
    pub fn delta(kernel_size: usize, height: usize, width: usize) -> Self {
        let taps = kernel_size * kernel_size;
        let mut k = vec![S::zero(); height * width * taps];
        for px in 0..height * width {
            k[px * taps + taps / 2] = S::one();
        }
        FilterBank {
            kernel_size,
            height,
            width,
            kernels: k,
            normalized: true,
        }
    }

    pub fn kernel(&self, y: usize, x: usize) -> &[S] {
        let taps = self.kernel_size * self.kernel_size;
        let i = (y * self.width + x) * taps;
        &self.kernels[i..i + taps]
    }
}

fn softmax_in_place<S: Scalar>(v: &mut [S]) {
    let m = v.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum = sum + *x;
    }
    v.iter_mut().for_each(|x| *x = *x / sum);
}

/// Generates per-pixel kernels from a gamma-adjusted `C×H×W` map:
/// avg-pool 2 → max-pool 2 → two residual blocks → 1×1 conv to `u_p²`
/// channels → bilinear resize back to `H×W` → per-pixel softmax.
pub fn build_filter_bank<S: Scalar>(y: &Tensor<S>, gen: &FilterGenerator<S>) -> Result<FilterBank<S>> {
    let (c, h, w) = y.chw()?;
    if h < 4 || w < 4 {
        return Err(Error::invalid(
            "build_filter_bank",
            format!("{h}x{w} input too small for the 4x pooling chain"),
        ));
    }
    if c != gen.channels {
        return Err(Error::Shape {
            op: "build_filter_bank",
            axis: "channels",
            expected: gen.channels,
            found: c,
        });
    }
    let mut z = pool2d(y, PoolKind::Avg, 2, 2)?;
    z = pool2d(&z, PoolKind::Max, 2, 2)?;
    for block in &gen.blocks {
        z = block.forward(&z)?;
    }
    let logits = conv2d(&z, &gen.head)?;
    let logits = resize_bilinear(&logits, h, w)?;

    let taps = gen.kernel_size * gen.kernel_size;
    let plane = h * w;
    let mut kernels = vec![S::zero(); plane * taps];
    for px in 0..plane {
        let k = &mut kernels[px * taps..(px + 1) * taps];
        for (t, v) in k.iter_mut().enumerate() {
            *v = logits.data()[t * plane + px];
        }
        if gen.normalize {
            softmax_in_place(k);
        }
    }
    FilterBank::new(gen.kernel_size, h, w, kernels)
}

/// `X̂(p) = Σ kernel_p · patch_p(X)` over the zero-padded `u_p × u_p`
/// neighbourhood of each pixel, one shared kernel for all channels.
pub fn apply_filter_bank<S: Scalar>(x: &Tensor<S>, bank: &FilterBank<S>) -> Result<Tensor<S>> {
    let (_, h, w) = x.chw()?;
    if (h, w) != (bank.height, bank.width) {
        return Err(Error::Shape {
            op: "apply_filter_bank",
            axis: if h != bank.height { "height" } else { "width" },
            expected: if h != bank.height { bank.height } else { bank.width },
            found: if h != bank.height { h } else { w },
        });
    }
    let u = bank.kernel_size;
    let r = (u / 2) as isize;
    let mut out = Vec::with_capacity(x.len());
    for plane in x.data().chunks_exact(h * w) {
        for yy in 0..h {
            for xx in 0..w {
                let k = bank.kernel(yy, xx);
                let mut acc = S::zero();
                for dy in 0..u {
                    let sy = yy as isize + dy as isize - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for dx in 0..u {
                        let sx = xx as isize + dx as isize - r;
                        if sx >= 0 && sx < w as isize {
                            acc = acc + k[dy * u + dx] * plane[sy as usize * w + sx as usize];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    let t = Tensor::from_parts(x.shape().to_vec(), out);
    t.ensure_finite("apply_filter_bank")?;
    Ok(t)
}
