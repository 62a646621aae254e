use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tcm::LossGrad;
use crate::tensor::Tensor;

/// Reference luminance mean of normal-light images.
pub const REFERENCE_LUMINANCE: f64 = 0.5;
/// Contrast scaling factor of the pixel-wise loss.
pub const CONTRAST_SCALE: f64 = 0.7;
pub const ILLUMINATION_MIN: f64 = 1e-3;
pub const ILLUMINATION_MAX: f64 = 1e3;
/// Added to the enhanced luminance before dividing.
pub const RATIO_EPS: f64 = 1e-6;
/// Input luminance is floored here so the pixel target stays defined.
pub const LUMINANCE_FLOOR: f64 = 1e-6;

/// Per-pixel illumination scale `S` with the statistics its losses need.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminationMap<S> {
    /// `1×H×W`
    pub s: Tensor<S>,
    /// Input luminance `I`, `1×H×W`.
    pub i_lum: Tensor<S>,
    /// `Y_H / Y_L`
    pub alpha: S,
    pub beta: S,
    pub y_h: S,
    /// Mean of `i_lum`.
    pub y_l: S,
    /// Pixels of `S` that hit a clamp bound.
    pub clamped: usize,
}

impl<S: Scalar> IlluminationMap<S> {
    pub fn new(s: Tensor<S>, i_lum: Tensor<S>) -> Result<Self> {
        s.same_shape(&i_lum, "illumination")?;
        let y_h = S::lit(REFERENCE_LUMINANCE);
        let y_l = i_lum.mean();
        let alpha = if y_l > S::zero() { y_h / y_l } else { S::infinity() };
        Ok(IlluminationMap {
            s,
            i_lum,
            alpha,
            beta: S::lit(CONTRAST_SCALE),
            y_h,
            y_l,
            clamped: 0,
        })
    }

    /// Pixel-wise target `β · (α·I)^α`.
    pub fn pixel_target(&self) -> Tensor<S> {
        self.i_lum.map(|i| self.beta * (self.alpha * i).powf(self.alpha))
    }
}

/// `S = I_lum / (X̂_lum + ε)`, clamped, where `_lum` is the channel mean.
pub fn derive_illumination<S: Scalar>(input: &Tensor<S>, enhanced: &Tensor<S>) -> Result<IlluminationMap<S>> {
    input.same_shape(enhanced, "derive_illumination")?;
    let i_lum = input.channel_mean()?;
    let e_lum = enhanced.channel_mean()?;
    let (lo, hi) = (S::lit(ILLUMINATION_MIN), S::lit(ILLUMINATION_MAX));
    let eps = S::lit(RATIO_EPS);
    let raw = i_lum.zip_map(&e_lum, "derive_illumination", |i, e| i / (e + eps))?;
    let clamped = raw.data().iter().filter(|&&r| !(r >= lo && r <= hi)).count();
    let s = raw.map(|r| r.max(lo).min(hi));
    let floor = S::lit(LUMINANCE_FLOOR);
    let mut map = IlluminationMap::new(s, i_lum.map(|v| v.max(floor)))?;
    map.clamped = clamped;
    Ok(map)
}

/// Global adjustment loss: `mean (S − α⁻¹)²`.
pub fn l_over<S: Scalar>(map: &IlluminationMap<S>) -> Result<LossGrad<S>> {
    if map.y_l.is_nan() || map.y_l <= S::zero() {
        return Err(Error::invalid("l_over", "input luminance mean must be > 0"));
    }
    mean_square_to(&map.s, |_| S::one() / map.alpha)
}

/// Pixel-wise adjustment loss: `mean (S − β·(α·I)^α)²`.
pub fn l_pix<S: Scalar>(map: &IlluminationMap<S>) -> Result<LossGrad<S>> {
    if !(map.alpha.is_finite() && map.i_lum.data().iter().all(|&i| map.alpha * i > S::zero())) {
        return Err(Error::invalid("l_pix", "alpha * I must be > 0"));
    }
    let target = map.pixel_target();
    mean_square_to(&map.s, |i| target.data()[i])
}

fn mean_square_to<S: Scalar>(s: &Tensor<S>, target: impl Fn(usize) -> S) -> Result<LossGrad<S>> {
    let n = S::from_usize_lossy(s.len());
    let two = S::lit(2.0);
    let mut loss = S::zero();
    let grad: Vec<S> = s
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = v - target(i);
            loss = loss + d * d;
            two * d / n
        })
        .collect();
    let grad = Tensor::new(s.shape(), grad)?;
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "illumination loss",
        });
    }
    Ok(LossGrad { loss, grad })
}
