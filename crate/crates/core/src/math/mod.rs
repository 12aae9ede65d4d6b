//! Numeric primitives: distributions, a dense MLP with dropout and
//! backpropagation, optimizers, reproducible random streams and checkpoints.

pub mod checkpoint;
pub mod dist;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use dist::{argmax, average, entropy, kl_divergence, log_softmax, mix, softmax, Distribution, SIMPLEX_TOLERANCE};
pub use matrix::DenseMatrix;
pub use mlp::{
    batch_gradient, batch_loss, train_step, Activation, Example, ForwardMode, Gradients, Layer, LossTarget, MlpModel,
    SubsetTarget,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use rng::RngStream;
pub use trainer::run_epochs;
