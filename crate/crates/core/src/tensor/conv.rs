use super::{normalize_layer, ChannelNorm, Tensor};
use crate::error::{Error, Result};
use crate::init::ParamRng;
use crate::scalar::Scalar;

/// A square 2-D convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec<S> {
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × k × k`
    pub weights: Tensor<S>,
    /// `out`
    pub bias: Tensor<S>,
}

impl<S: Scalar> ConvSpec<S> {
    /// Builds a layer from explicit weights; kernel size and channel counts
    /// are read off the weight shape.
    pub fn new(weights: Tensor<S>, bias: Tensor<S>, stride: usize, padding: usize) -> Result<Self> {
        let [out_channels, in_channels, kh, kw] = weights.shape()[..] else {
            return Err(Error::Shape {
                op: "conv spec",
                axis: "rank",
                expected: 4,
                found: weights.rank(),
            });
        };
        if kh != kw {
            return Err(Error::Shape {
                op: "conv spec",
                axis: "kernel width",
                expected: kh,
                found: kw,
            });
        }
        if bias.shape() != [out_channels] {
            return Err(Error::Shape {
                op: "conv spec",
                axis: "bias",
                expected: out_channels,
                found: bias.len(),
            });
        }
        if stride == 0 || kh == 0 {
            return Err(Error::invalid("conv spec", "stride and kernel size must be positive"));
        }
        Ok(ConvSpec {
            kernel_size: kh,
            stride,
            padding,
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            kernel_size: k,
            stride,
            padding,
            in_channels,
            out_channels,
            weights: Tensor::zeros(&[out_channels, in_channels, k, k]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    /// Seeded fan-in uniform initialization of weights and bias.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut ParamRng,
    ) -> Self {
        let fan_in = in_channels * k * k;
        let w = rng.fan_in_uniform(out_channels * in_channels * k * k, fan_in);
        let b = rng.fan_in_uniform(out_channels, fan_in);
        ConvSpec {
            kernel_size: k,
            stride,
            padding,
            in_channels,
            out_channels,
            weights: Tensor::from_parts(vec![out_channels, in_channels, k, k], w),
            bias: Tensor::from_parts(vec![out_channels], b),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Output `(H, W)` for an input of `h × w`.
    pub fn output_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let reach = |n: usize, axis: &'static str| {
            let padded = n + 2 * self.padding;
            if padded < self.kernel_size {
                Err(Error::Shape {
                    op: "conv2d",
                    axis,
                    expected: self.kernel_size,
                    found: padded,
                })
            } else {
                Ok((padded - self.kernel_size) / self.stride + 1)
            }
        };
        Ok((reach(h, "height")?, reach(w, "width")?))
    }
}

/// A 3×3 stride-1 convolution followed by channel normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNorm<S> {
    pub conv: ConvSpec<S>,
    pub norm: ChannelNorm<S>,
}

impl<S: Scalar> ConvNorm<S> {
    pub fn init(cin: usize, cout: usize, rng: &mut ParamRng) -> Self {
        ConvNorm {
            conv: ConvSpec::init(cin, cout, 3, 1, 1, rng),
            norm: ChannelNorm::identity(cout),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        normalize_layer(&conv2d(x, &self.conv)?, &self.norm)
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.norm.param_count()
    }
}

/// Direct 2-D convolution (cross-correlation) with zero padding.
pub fn conv2d<S: Scalar>(x: &Tensor<S>, spec: &ConvSpec<S>) -> Result<Tensor<S>> {
    let (c, h, w) = x.chw()?;
    if c != spec.in_channels {
        return Err(Error::Shape {
            op: "conv2d",
            axis: "channels",
            expected: spec.in_channels,
            found: c,
        });
    }
    let (oh, ow) = spec.output_extent(h, w)?;
    let k = spec.kernel_size;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    let xd = x.data();
    let wd = spec.weights.data();
    let mut out = vec![S::zero(); spec.out_channels * oh * ow];

    for oc in 0..spec.out_channels {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = spec.bias.data()[oc]);
        for ic in 0..c {
            let xin = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((oc * c + ic) * k + ky) * k + kx];
                    if wv == S::zero() {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy as isize * s + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &xin[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let ix = ox as isize * s + kx as isize - p;
                            if ix >= 0 && ix < w as isize {
                                *o = *o + wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    let t = Tensor::from_parts(vec![spec.out_channels, oh, ow], out);
    t.ensure_finite("conv2d")?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Output-centric quadruple loop, written independently of `conv2d`.
    fn naive(x: &Tensor<f64>, spec: &ConvSpec<f64>) -> Vec<f64> {
        let (c, h, w) = x.chw().unwrap();
        let (k, s, p) = (spec.kernel_size, spec.stride, spec.padding);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        let mut out = Vec::new();
        for oc in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = spec.bias.data()[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * s + ky) as i64 - p as i64;
                                let ix = (ox * s + kx) as i64 - p as i64;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += spec.weights.data()[((oc * c + ic) * k + ky) * k + kx]
                                        * x.data()[(ic * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor::<f32>::full(&[1, 3, 3], 1.0);
        let spec = ConvSpec::new(Tensor::full(&[1, 1, 3, 3], 1.0), Tensor::zeros(&[1]), 1, 1).unwrap();
        let y = conv2d(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ParamRng::new(3);
        let x = Tensor::<f32>::new(&[2, 5, 5], rng.fill(50, -1.0, 1.0)).unwrap();
        let y = conv2d(&x, &ConvSpec::zeros(2, 4, 3, 1, 1)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_loop_on_random_suite() {
        let mut rng = ParamRng::new(11);
        for case in 0..10 {
            let (c, h, w) = (1 + case % 3, 2 + rng.index(7), 2 + rng.index(7));
            let oc = 1 + rng.index(3);
            let k = [1, 3][case % 2];
            let stride = 1 + rng.index(2);
            let pad = rng.index(2);
            let x = Tensor::<f64>::new(&[c, h, w], rng.fill(c * h * w, -1.0, 1.0)).unwrap();
            let spec = ConvSpec::init(c, oc, k, stride, pad, &mut rng);
            if h + 2 * pad < k || w + 2 * pad < k {
                continue;
            }
            let got = conv2d(&x, &spec).unwrap();
            for (a, b) in got.data().iter().zip(naive(&x, &spec)) {
                assert!((a - b).abs() < 1e-6, "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn two_by_four_by_four_matches_naive() {
        let mut rng = ParamRng::new(5);
        let x = Tensor::<f64>::new(&[2, 4, 4], rng.fill(32, -1.0, 1.0)).unwrap();
        let spec = ConvSpec::init(2, 3, 3, 1, 1, &mut rng);
        let got = conv2d(&x, &spec).unwrap();
        for (a, b) in got.data().iter().zip(naive(&x, &spec)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let x = Tensor::<f32>::zeros(&[2, 4, 4]);
        let err = conv2d(&x, &ConvSpec::zeros(3, 1, 3, 1, 1)).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn too_small_input_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]);
        let err = conv2d(&x, &ConvSpec::zeros(1, 1, 5, 1, 0)).unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
    }

    #[test]
    fn bias_shape_validated() {
        let w = Tensor::<f32>::zeros(&[2, 1, 3, 3]);
        assert!(ConvSpec::new(w, Tensor::zeros(&[3]), 1, 1).is_err());
    }
}
