//! Feed-forward neural networks on layered DAG architectures, trained by
//! full-batch backpropagation with adaptive momentum.
//!
//! - [`topology`]: layer widths, edge sets and the autoencoder code-layer cut
//! - [`activations`]: bounded activations with analytic derivatives
//! - [`network`]: forward propagation and the total squared error
//! - [`gradients`]: reverse-mode gradients and a finite-difference oracle
//! - [`optimizer`]: the adaptive-momentum update
//! - [`convergence`]: trajectory records and empirical convergence checks
//! - [`training`]: the full-batch training loop
//! - [`autoencoder`], [`metrics`], [`data`]: the compression experiment

pub mod activations;
pub mod autoencoder;
pub mod convergence;
pub mod data;
mod dd;
pub mod error;
pub mod gradients;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod params;
pub mod reduce;
pub mod topology;
pub mod training;

pub use activations::Activation;
pub use error::{Error, Result};
pub use gradients::GradientSet;
pub use matrix::Matrix;
pub use network::ForwardTrace;
pub use optimizer::OptimizerState;
pub use params::{EdgeMatrices, WeightSet};
pub use topology::{DagTopology, Edge};
