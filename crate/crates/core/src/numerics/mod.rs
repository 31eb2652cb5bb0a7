//! Dense-network evaluation, gradients, optimizers and gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod network;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, Parameters};
pub use network::{Activation, DenseLayer, LayerGrads, Network, NetworkGrads, Tape};
pub use tensor::Tensor;
