//! Bi-modal (audio + face frames) regression of the Big-Five personality
//! traits from short interview clips.
//!
//! The crate is framework-free: tensors, layer kernels and their backward
//! passes, audio feature extraction, the two fused architectures (volumetric
//! convolution and LSTM), stochastic frame sampling, SGD training and the
//! Mean Average Accuracy metric all live here.

pub mod audio;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod layers;
pub mod models;
pub mod sampler;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};

pub use models::{Architecture, TraitScores};
pub use tensor::{Precision, Real, Tensor};
