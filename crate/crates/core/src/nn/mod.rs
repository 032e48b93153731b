//! Minimal differentiable function approximators.

pub mod activation;
pub mod mlp;
pub mod optim;

pub use activation::{
    rms_norm, squareplus, squareplus_sigmoid, squareplus_sigmoid_grad, RMS_NORM_EPS, SQUAREPLUS_B,
};
pub use mlp::{soft_update, GradBuffer, Layer, MlpParams, Tape};
pub use optim::{AdamConfig, OptimizerState};
