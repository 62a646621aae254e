//! Luminance adaptation.
//!
//! A feature map is min-max normalized, brightened by a gamma chosen so the
//! mean moves toward `mu_out`, and the brightened map drives a small network
//! that emits one `u_p × u_p` kernel per pixel. The kernels are applied to
//! the original features (or, optionally, to the gamma output). An
//! illumination map derived from input and output feeds the global and
//! pixel-wise adjustment losses.

mod filter;
mod gamma;
mod illumination;

pub use filter::{
    apply_filter_bank, build_filter_bank, FilterBank, FilterGenerator, ResidualBlock, DEFAULT_KERNEL_SIZE,
};
pub use gamma::{
    estimate_gamma, gamma_from_means, gamma_transform, normalize_unit, GammaParams, UnitMap, DEFAULT_MU_OUT,
    MU_IN_CLAMP,
};
pub use illumination::{
    derive_illumination, l_over, l_pix, IlluminationMap, CONTRAST_SCALE, ILLUMINATION_MAX, ILLUMINATION_MIN,
    LUMINANCE_FLOOR, RATIO_EPS, REFERENCE_LUMINANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which map the generated kernels are applied to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterTarget {
    /// The incoming features `X`.
    #[default]
    Input,
    /// The gamma-adjusted map `Y`.
    Gamma,
}

#[derive(Clone, Debug)]
pub struct LamOutput<S> {
    pub gamma: GammaParams<S>,
    /// `X'`, in `[0, 1]`
    pub normalized: Tensor<S>,
    /// `Y = X'^γ`
    pub transformed: Tensor<S>,
    pub bank: FilterBank<S>,
    /// `X̂`
    pub enhanced: Tensor<S>,
    pub illumination: IlluminationMap<S>,
    pub l_over: S,
    pub l_pix: S,
}

/// Full luminance-adaptation pass on one `C×H×W` feature map.
///
/// Illumination is measured in normalized units: the input side is `X'`,
/// the output side is `X̂` pushed through the same `[0, 1]` map (clamped).
pub fn lam_forward<S: Scalar>(
    x: &Tensor<S>,
    gen: &FilterGenerator<S>,
    mu_out: S,
    target: FilterTarget,
) -> Result<LamOutput<S>> {
    let (gamma, normalized, unit) = estimate_gamma(x, mu_out)?;
    let transformed = gamma_transform(&normalized, gamma.gamma);
    let bank = build_filter_bank(&transformed, gen)?;
    let (enhanced, enhanced_unit) = match target {
        FilterTarget::Input => {
            let e = apply_filter_bank(x, &bank)?;
            let u = e.map(|v| unit.apply(v).max(S::zero()).min(S::one()));
            (e, u)
        }
        FilterTarget::Gamma => {
            let e = apply_filter_bank(&transformed, &bank)?;
            let u = e.map(|v| v.max(S::zero()).min(S::one()));
            (e, u)
        }
    };
    let illumination = derive_illumination(&normalized, &enhanced_unit)?;
    let l_over = l_over(&illumination)?.loss;
    let l_pix = l_pix(&illumination)?.loss;
    Ok(LamOutput {
        gamma,
        normalized,
        transformed,
        bank,
        enhanced,
        illumination,
        l_over,
        l_pix,
    })
}
