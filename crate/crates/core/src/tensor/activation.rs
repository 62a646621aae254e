use super::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

/// Logistic function, evaluated so that neither tail overflows.
#[inline]
pub fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

#[inline]
pub fn relu<S: Scalar>(v: S) -> S {
    v.max(S::zero())
}

pub fn activate<S: Scalar>(x: &Tensor<S>, kind: Activation) -> Tensor<S> {
    match kind {
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Relu => x.map(relu),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(relu(-3.0f32), 0.0);
        assert_eq!(relu(2.5f32), 2.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn tails_stay_finite() {
        let x = Tensor::<f32>::new(&[3], vec![-1e4, 0.0, 1e4]).unwrap();
        let y = activate(&x, Activation::Sigmoid);
        assert_eq!(y.data(), &[0.0, 0.5, 1.0]);
        assert!(y.is_finite());
    }
}
