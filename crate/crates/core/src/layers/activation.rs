use crate::error::Result;
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]; the kink at zero gets slope zero.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.same_shape("relu_backward", grad_out)?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape(), data)
}

/// Logistic function, kept strictly inside (0, 1) even where it would
/// round to an endpoint.
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    let one = T::one();
    let s = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    s.max(T::min_positive_value()).min(one - T::epsilon())
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of [`sigmoid`] given its forward output `s`: `g * s * (1 - s)`.
pub fn sigmoid_backward<T: Real>(s: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    s.same_shape("sigmoid_backward", grad_out)?;
    let data = s
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::new(s.shape(), data)
}
