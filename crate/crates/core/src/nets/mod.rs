//! Dense multilayer perceptrons with exact reverse-mode gradients and Adam.

mod adam;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Activation, Gradients, Layer, Mlp, MlpCheckpoint, MlpSpec};
