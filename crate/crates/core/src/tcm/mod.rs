//! Time-consistency module: a shallow paired-frame encoder with gated
//! split fusion, and the temporal-consistency losses.
//!
//! For each adjacent pair `(F_i, F_{i+1})` the 6-channel concatenation goes
//! through three conv/norm/relu layers to give `F̃` with `2C` channels. `F̃`
//! is split into halves `F̃¹`, `F̃²` and fused as
//!
//! ```text
//! z = F̃¹ · σ(W₁ ∗ F̃¹) + F̃² · σ(W₂ ∗ F̃²)
//! ```
//!
//! then mixed by three conv/norm layers into the pair feature `X_i`.

mod loss;

pub use loss::{l_scf, l_tc, region_means, rgb_diff, scf_on_regions, LossGrad, RegionGrid};

use crate::error::{Error, Result};
use crate::init::ParamRng;
use crate::scalar::Scalar;
use crate::tensor::{conv2d, relu, sigmoid, ConvNorm, ConvSpec, Tensor};

pub const DEFAULT_BASE_CHANNELS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TcmParams<S> {
    /// `C`; the shallow encoder emits `2C` channels.
    pub base_channels: usize,
    /// 6→2C, 2C→2C, 2C→2C; each followed by relu.
    pub pre: [ConvNorm<S>; 3],
    /// C→C gate convolutions for the two halves.
    pub gates: [ConvSpec<S>; 2],
    /// C→C mixing layers without activation.
    pub post: [ConvNorm<S>; 3],
}

impl<S: Scalar> TcmParams<S> {
    pub fn init(base_channels: usize, rng: &mut ParamRng) -> Self {
        let c = base_channels;
        TcmParams {
            base_channels: c,
            pre: [
                ConvNorm::init(6, 2 * c, rng),
                ConvNorm::init(2 * c, 2 * c, rng),
                ConvNorm::init(2 * c, 2 * c, rng),
            ],
            gates: [ConvSpec::init(c, c, 3, 1, 1, rng), ConvSpec::init(c, c, 3, 1, 1, rng)],
            post: [
                ConvNorm::init(c, c, rng),
                ConvNorm::init(c, c, rng),
                ConvNorm::init(c, c, rng),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.pre
            .iter()
            .chain(&self.post)
            .map(ConvNorm::param_count)
            .sum::<usize>()
            + self.gates.iter().map(ConvSpec::param_count).sum::<usize>()
    }
}

/// Intermediate values of one frame pair.
#[derive(Clone, Debug)]
pub struct PairFeatures<S> {
    /// `F̃`, `2C×H×W`
    pub shallow: Tensor<S>,
    /// `z`, `C×H×W`
    pub fused: Tensor<S>,
    /// `X_i`, `C×H×W`
    pub features: Tensor<S>,
}

/// Gated fusion of the two channel halves of `F̃`.
pub fn gated_fusion<S: Scalar>(shallow: &Tensor<S>, gates: &[ConvSpec<S>; 2]) -> Result<Tensor<S>> {
    let (first, second) = shallow.split_channels()?;
    let g1 = conv2d(&first, &gates[0])?;
    let g2 = conv2d(&second, &gates[1])?;
    let z = first
        .data()
        .iter()
        .zip(g1.data())
        .zip(second.data().iter().zip(g2.data()))
        .map(|((&a, &ga), (&b, &gb))| a * sigmoid(ga) + b * sigmoid(gb))
        .collect();
    Ok(Tensor::from_parts(first.shape().to_vec(), z))
}

fn pair_input<S: Scalar>(clip: &Tensor<S>, i: usize) -> Result<Tensor<S>> {
    Tensor::concat_channels(&clip.frame(i), &clip.frame(i + 1))
}

/// Runs the module on every adjacent pair of a `T×3×H×W` clip in `[0, 1]`.
pub fn tcm_forward_traced<S: Scalar>(clip: &Tensor<S>, params: &TcmParams<S>) -> Result<Vec<PairFeatures<S>>> {
    let (t, c, _, _) = clip.tchw()?;
    if c != 3 {
        return Err(Error::Shape {
            op: "tcm_forward",
            axis: "channels",
            expected: 3,
            found: c,
        });
    }
    if t < 2 {
        return Err(Error::invalid("tcm_forward", format!("need T >= 2 frames, got {t}")));
    }
    (0..t - 1)
        .map(|i| {
            let mut x = pair_input(clip, i)?;
            for layer in &params.pre {
                x = layer.forward(&x)?.map(relu);
            }
            let shallow = x;
            debug_assert_eq!(shallow.chw()?.0, 2 * params.base_channels);
            let fused = gated_fusion(&shallow, &params.gates)?;
            let mut features = fused.clone();
            for layer in &params.post {
                features = layer.forward(&features)?;
            }
            Ok(PairFeatures {
                shallow,
                fused,
                features,
            })
        })
        .collect()
}

/// Pair features `X_1 … X_{T−1}`.
pub fn tcm_forward<S: Scalar>(clip: &Tensor<S>, params: &TcmParams<S>) -> Result<Vec<Tensor<S>>> {
    Ok(tcm_forward_traced(clip, params)?
        .into_iter()
        .map(|p| p.features)
        .collect())
}
