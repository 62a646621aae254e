use super::Tensor;
use crate::error::{Error, Result};

/// Central-difference step used by the gradient oracle.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function, one coordinate at a time.
pub fn numeric_gradient<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: Fn(&Tensor<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), grad))
}

/// Largest per-coordinate `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, analytic: &Tensor<f64>) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> f64,
{
    x.same_shape(analytic, "grad_check")?;
    if !f(x).is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    let numeric = numeric_gradient(f, x, GRAD_CHECK_STEP)?;
    Ok(analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max))
}
