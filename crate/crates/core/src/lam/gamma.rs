use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Target luminance mean used unless configured otherwise.
pub const DEFAULT_MU_OUT: f64 = 0.5;
/// `mu_in` is clamped to `[MU_IN_CLAMP, 1 − MU_IN_CLAMP]`.
pub const MU_IN_CLAMP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaParams<S> {
    pub mu_out: S,
    pub mu_in: S,
    pub gamma: S,
}

/// The affine map `v ↦ v·scale + shift` that took raw values into `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitMap<S> {
    pub scale: S,
    pub shift: S,
}

impl<S: Scalar> UnitMap<S> {
    pub fn apply(&self, v: S) -> S {
        v * self.scale + self.shift
    }
}

/// Min-max normalization to `[0, 1]`.
///
/// A constant map has no range: a constant already inside `[0, 1]` is kept
/// as is, any other constant becomes 0.5.
pub fn normalize_unit<S: Scalar>(x: &Tensor<S>) -> (Tensor<S>, UnitMap<S>) {
    let (lo, hi) = (x.min(), x.max());
    let map = if hi > lo {
        let scale = S::one() / (hi - lo);
        UnitMap {
            scale,
            shift: -lo * scale,
        }
    } else if lo >= S::zero() && lo <= S::one() {
        UnitMap {
            scale: S::one(),
            shift: S::zero(),
        }
    } else {
        UnitMap {
            scale: S::zero(),
            shift: S::lit(0.5),
        }
    };
    let normalized = x.map(|v| map.apply(v).max(S::zero()).min(S::one()));
    (normalized, map)
}

/// `gamma = ln(mu_out) / ln(mu_in)` with `mu_in` clamped away from 0 and 1.
pub fn gamma_from_means<S: Scalar>(mu_in: S, mu_out: S) -> Result<GammaParams<S>> {
    if !(mu_out > S::zero() && mu_out < S::one()) {
        return Err(Error::invalid(
            "estimate_gamma",
            format!("mu_out {mu_out} outside (0, 1)"),
        ));
    }
    let lo = S::lit(MU_IN_CLAMP);
    let mu_in = mu_in.max(lo).min(S::one() - lo);
    Ok(GammaParams {
        mu_out,
        mu_in,
        gamma: mu_out.ln() / mu_in.ln(),
    })
}

/// Normalizes `x` to `[0, 1]` and derives the gamma that moves its mean toward `mu_out`.
pub fn estimate_gamma<S: Scalar>(x: &Tensor<S>, mu_out: S) -> Result<(GammaParams<S>, Tensor<S>, UnitMap<S>)> {
    let (normalized, map) = normalize_unit(x);
    let params = gamma_from_means(normalized.mean(), mu_out)?;
    Ok((params, normalized, map))
}

/// Elementwise `x^gamma` on values in `[0, 1]` (inputs clamped; `0^gamma = 0`).
pub fn gamma_transform<S: Scalar>(x: &Tensor<S>, gamma: S) -> Tensor<S> {
    x.map(|v| {
        let v = v.max(S::zero()).min(S::one());
        if v == S::zero() {
            S::zero()
        } else {
            v.powf(gamma)
        }
    })
}
