use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Mean of squared elementwise differences.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    pred.same_shape("mse_loss", target)?;
    let mut acc = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        acc += (p - t) * (p - t);
    }
    Ok(acc / T::of(pred.len() as f64))
}

/// `2 (pred - target) / n`.
pub fn mse_loss_backward<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    pred.same_shape("mse_loss_backward", target)?;
    let k = T::of(2.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| k * (p - t))
        .collect();
    Tensor::new(pred.shape(), data)
}
