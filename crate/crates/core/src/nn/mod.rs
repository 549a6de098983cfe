//! Minimal convolutional network engine: forward inference, cross-entropy
//! loss, and exact reverse-mode gradients with respect to parameters and
//! input.

mod layer;
mod network;
mod tensor;
mod train;

pub use layer::LayerSpec;
pub use network::{CostGradient, Mode, Network};
pub use tensor::{ConfVector, Tensor};
pub use train::{train, TrainConfig, Trained};
