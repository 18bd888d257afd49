//! Feature-combination networks for tabular classification.
//!
//! The pipeline expands each input row into products (or pairwise-product sums)
//! over every size-`m` subset of its features, standardizes the expanded
//! columns, and classifies them with a small fully connected network that
//! includes residual blocks, batch normalization and dropout. Everything,
//! including backpropagation and the Adam optimizer, is implemented here on a
//! plain row-major `f64` matrix.
//!
//! Modules, bottom-up:
//!
//! - [`ndcore`]: [`Matrix2D`] and the seeded [`Rng`].
//! - [`featcomb`]: subset enumeration, the two combiners and their gradients.
//! - [`layers`]: dense, ReLU, batch norm, dropout, residual, conv1d, softmax loss.
//! - [`model`]: the feature-combination network and the baselines.
//! - [`train`]: Adam, L2, the training loop, metrics and gradient checking.
//! - [`data`]: CSV loading, z-scoring, stratified splits, synthetic tasks.
//! - [`pipeline`]: end-to-end fit/evaluate plus checkpoint files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod featcomb;
pub mod layers;
pub mod model;
pub mod ndcore;
pub mod pipeline;
pub mod train;

pub use data::{Dataset, NormStats};
pub use error::{Error, Result};
pub use featcomb::{Approach, CombinationSpec, CombinedFeatures, SubsetIndex};
pub use layers::{Activation, Layer, Mode};
pub use model::{ModelConfig, ModelGraph, ModelKind};
pub use ndcore::{Matrix2D, Rng, RNG_ALGORITHM};
pub use pipeline::{Checkpoint, Pipeline};
pub use train::{Metrics, TrainConfig, TrainHistory};
