//! Reflect augmentation: a staged toy transformer backbone in which every
//! stage runs a main pathway `f₁`, re-processes its output with a single
//! "reflected" block `f₂`, and fuses the two by channel concatenation
//! `f₂(f₁(X)) ⓒ f₁(X)` followed by a 1×1 projection back to the stage width.

mod layers;

pub use layers::{map_to_tokens, tokens_to_map, Attention, Linear, TokenNorm, TransformerBlock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::init::ParamRng;
use crate::scalar::Scalar;
use crate::tensor::{conv2d, ConvSpec, Tensor};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    /// Channels of the incoming feature maps.
    pub in_channels: usize,
    /// Output width of each stage, strictly increasing.
    pub stage_channels: Vec<usize>,
    /// Transformer blocks in the main pathway of each stage.
    pub main_depths: Vec<usize>,
    pub mlp_ratio: usize,
    pub num_classes: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            in_channels: crate::tcm::DEFAULT_BASE_CHANNELS,
            stage_channels: vec![32, 64, 128],
            main_depths: vec![2, 2, 12],
            mlp_ratio: 2,
            num_classes: 10,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid("backbone config", msg));
        if self.stage_channels.is_empty() {
            return bad("at least one stage required".into());
        }
        if self.main_depths.len() != self.stage_channels.len() {
            return bad(format!(
                "{} main depths for {} stages",
                self.main_depths.len(),
                self.stage_channels.len()
            ));
        }
        if self.stage_channels.windows(2).any(|w| w[0] >= w[1]) || self.stage_channels[0] == 0 {
            return bad("stage channels must be positive and strictly increasing".into());
        }
        if self.main_depths.contains(&0) {
            return bad("main depth must be >= 1".into());
        }
        if self.num_classes < 2 || self.mlp_ratio == 0 || self.in_channels == 0 {
            return bad("need >= 2 classes, mlp ratio >= 1 and input channels >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage<S> {
    pub in_channels: usize,
    pub channels: usize,
    /// 3×3 stride-2 downsampling convolution.
    pub stem: ConvSpec<S>,
    pub main: Vec<TransformerBlock<S>>,
    pub reflected: TransformerBlock<S>,
    /// 1×1 projection of `[reflected; main]` (2C channels) back to C.
    pub fuse: ConvSpec<S>,
}

impl<S: Scalar> Stage<S> {
    pub fn init(in_channels: usize, channels: usize, depth: usize, mlp_ratio: usize, rng: &mut ParamRng) -> Self {
        let stem = ConvSpec::init(in_channels, channels, 3, 2, 1, rng);
        let main = (0..depth)
            .map(|_| TransformerBlock::init(channels, mlp_ratio, rng))
            .collect();
        let reflected = TransformerBlock::init(channels, mlp_ratio, rng);
        let fuse = ConvSpec::init(2 * channels, channels, 1, 1, 0, rng);
        Stage {
            in_channels,
            channels,
            stem,
            main,
            reflected,
            fuse,
        }
    }

    pub fn main_params(&self) -> usize {
        self.stem.param_count() + self.main.iter().map(TransformerBlock::param_count).sum::<usize>()
    }

    pub fn reflected_params(&self) -> usize {
        self.reflected.param_count() + self.fuse.param_count()
    }
}

#[derive(Clone, Debug)]
pub struct StageOutput<S> {
    /// `f₁(X)`
    pub main: Tensor<S>,
    /// `f₂(f₁(X))`
    pub reflected: Tensor<S>,
    /// Projected `f₂(f₁(X)) ⓒ f₁(X)`.
    pub fused: Tensor<S>,
}

pub fn stage_forward<S: Scalar>(x: &Tensor<S>, stage: &Stage<S>) -> Result<StageOutput<S>> {
    let (c, _, _) = x.chw()?;
    if c != stage.in_channels {
        return Err(Error::Shape {
            op: "stage_forward",
            axis: "channels",
            expected: stage.in_channels,
            found: c,
        });
    }
    let mut main = conv2d(x, &stage.stem)?;
    for block in &stage.main {
        main = block.forward_map(&main)?;
    }
    let reflected = stage.reflected.forward_map(&main)?;
    let fused = conv2d(&Tensor::concat_channels(&reflected, &main)?, &stage.fuse)?;
    Ok(StageOutput { main, reflected, fused })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone<S> {
    pub config: BackboneConfig,
    pub stages: Vec<Stage<S>>,
    pub head: Linear<S>,
}

impl<S: Scalar> Backbone<S> {
    pub fn init(config: &BackboneConfig, rng: &mut ParamRng) -> Result<Self> {
        config.validate()?;
        let mut cin = config.in_channels;
        let mut stages = Vec::with_capacity(config.stage_channels.len());
        for (&c, &depth) in config.stage_channels.iter().zip(&config.main_depths) {
            stages.push(Stage::init(cin, c, depth, config.mlp_ratio, rng));
            cin = c;
        }
        let head = Linear::init(cin, config.num_classes, rng);
        Ok(Backbone {
            config: config.clone(),
            stages,
            head,
        })
    }

    pub fn param_counts(&self) -> ParamCounts {
        let main: usize = self.stages.iter().map(Stage::main_params).sum();
        let reflected: usize = self.stages.iter().map(|s| s.reflected.param_count()).sum();
        let fusion: usize = self.stages.iter().map(|s| s.fuse.param_count()).sum();
        let head = self.head.param_count();
        let base = main + head;
        ParamCounts {
            main,
            reflected,
            fusion,
            head,
            total: base + reflected + fusion,
            reflected_overhead: (reflected + fusion) as f64 / base as f64,
        }
    }
}

/// Parameter accounting per pathway. The overhead ratio charges both the
/// reflected blocks and the fusion projections against main + head.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCounts {
    pub main: usize,
    pub reflected: usize,
    pub fusion: usize,
    pub head: usize,
    pub total: usize,
    pub reflected_overhead: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<S> {
    pub logits: Vec<S>,
    pub probs: Vec<S>,
    pub top1: usize,
}

/// Index of the first maximum.
fn argmax<S: Scalar>(v: &[S]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, S::neg_infinity()),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let m = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let e: Vec<S> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: S = e.iter().copied().sum();
    e.into_iter().map(|v| v / z).collect()
}

impl<S: Scalar> Prediction<S> {
    pub fn from_logits(logits: Vec<S>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid("prediction", "no classes"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "prediction" });
        }
        let probs = softmax(&logits);
        let top1 = argmax(&logits);
        Ok(Prediction { logits, probs, top1 })
    }
}

/// Temporal mean of the pair features → stages → global average pool →
/// linear head → softmax.
pub fn classify_clip<S: Scalar>(features: &[Tensor<S>], backbone: &Backbone<S>) -> Result<Prediction<S>> {
    let mut x = Tensor::mean_of(features)?;
    for stage in &backbone.stages {
        x = stage_forward(&x, stage)?.fused;
    }
    let (c, h, w) = x.chw()?;
    let inv = S::one() / S::from_usize_lossy(h * w);
    let pooled: Vec<S> = (0..c).map(|ch| x.plane(ch).iter().copied().sum::<S>() * inv).collect();
    Prediction::from_logits(backbone.head.forward(&pooled))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy<S> {
    pub loss: S,
    /// `probs − onehot(y)`
    pub dlogits: Vec<S>,
    /// The target probability was below [`PROB_FLOOR`].
    pub clamped: bool,
}

/// `−ln probs[y]` and its gradient w.r.t. the logits that produced `probs`.
pub fn cross_entropy<S: Scalar>(probs: &[S], target: usize) -> Result<CrossEntropy<S>> {
    let p = *probs
        .get(target)
        .ok_or_else(|| Error::invalid("cross_entropy", format!("class {target} out of range")))?;
    let floor = S::lit(PROB_FLOOR);
    let clamped = p < floor;
    let loss = -p.max(floor).ln();
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(i, &q)| if i == target { q - S::one() } else { q })
        .collect();
    Ok(CrossEntropy { loss, dlogits, clamped })
}

/// `l_tc + (l_over + l_pix) + l_ce`, unit weights.
pub fn total_loss<S: Scalar>(l_tc: S, l_over: S, l_pix: S, l_ce: S) -> Result<S> {
    if [l_tc, l_over, l_pix, l_ce].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "total_loss" });
    }
    Ok(l_tc + (l_over + l_pix) + l_ce)
}
