//! Small-classifier training core.
//!
//! Models are multilayer perceptrons with rectifier hidden activations and a
//! softmax cross-entropy head; the degenerate case with no hidden layers is
//! softmax regression. All parameters live in one flat [`ParamVector`] so
//! that updates, representatives and aggregates are directly comparable.
//!
//! Flattening order is fixed: layer-major, weights before biases, row-major
//! within each weight matrix (`w[out][in]` at `out * in_dim + in`).

mod model;
pub(crate) mod params;
mod train;

pub use model::{
    cross_entropy, forward, glorot_init, gradient, loss_mean, per_sample_losses, predict,
    Architecture,
};
pub use params::ParamVector;
pub use train::{local_train, local_train_poisoned, BatchPoisoner, TrainConfig};
