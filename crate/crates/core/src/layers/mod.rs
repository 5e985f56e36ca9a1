//! Forward and backward kernels for every layer the two architectures use.
//!
//! All kernels are pure functions with a fixed accumulation order, so the
//! same inputs always give bit-identical outputs.

mod activation;
mod conv;
pub mod gradcheck;
mod linear;
mod loss;
mod lstm;
mod pool;

use std::collections::BTreeMap;

use crate::tensor::Tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use conv::{
    conv2d_backward, conv2d_forward, conv3d_backward, conv3d_forward, Stride2, Stride3,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::{linear, linear_backward};
pub use loss::{mse_loss, mse_loss_backward};
pub use lstm::{lstm_sequence, lstm_sequence_backward, GateParams, LstmCache, LstmParams, GATES};
pub use pool::{maxpool2d, maxpool3d, maxpool_backward, PoolOutput};

/// Gradients produced by one layer's backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    /// Gradient with respect to the layer input; `None` when the caller
    /// asked the kernel to skip it (first layer of a network).
    pub input: Option<Tensor<T>>,
    pub params: BTreeMap<&'static str, Tensor<T>>,
}

impl<T> LayerGrads<T> {
    pub fn param(&self, name: &str) -> &Tensor<T> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("layer has no parameter named {name}"))
    }

    pub fn take_param(&mut self, name: &str) -> Tensor<T> {
        self.params
            .remove(name)
            .unwrap_or_else(|| panic!("layer has no parameter named {name}"))
    }
}
