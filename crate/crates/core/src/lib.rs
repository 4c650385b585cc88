//! Gradient-free training of feed-forward networks by alternating
//! minimization with a Bregman multiplier on the output layer.
//!
//! Every sub-step is solved globally in closed form: weights and activations
//! by regularized least squares, pre-activations by scalar piecewise
//! minimization. The [`distributed`] module runs the same iteration over
//! column shards, exchanging only layer-sized Gram products.
//!
//! All numerics are generic over [`Scalar`] (`f32`, `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod baseline_sgd;
pub mod data;
pub mod distributed;
pub mod error;
pub mod history;
pub mod linalg;
pub mod loss;
pub mod network;
pub mod scalar;

pub use activations::{Activation, Tabulated};
pub use error::{Error, Result};
pub use history::{Flow, History, HistoryRow, Observer};
pub use linalg::{Matrix, SpdFactor};
pub use network::{MultiplierStep, TrainOutcome};
pub use scalar::Scalar;

pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type DatasetF64 = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type ArchitectureF64 = network::Architecture<f64>;
pub type HyperparamsF64 = network::Hyperparams<f64>;
pub type NetworkStateF64 = network::NetworkState<f64>;
pub type ModelF64 = network::Model<f64>;
pub type ActivationF64 = activations::Activation<f64>;
