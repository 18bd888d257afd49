//! Differentiable building blocks.
//!
//! Each layer exposes `forward` returning an explicit cache and `backward`
//! consuming it. [`Layer`] wraps them behind one interface so a model can be an
//! ordered list of layers, and exposes parameters as flat blocks in a fixed
//! order that gradients and optimizer state follow.

mod activation;
mod batchnorm;
mod conv1d;
mod dense;
mod dropout;
mod init;
mod loss;
mod residual;

pub use activation::{relu, relu_backward, Activation};
pub use batchnorm::{
    BatchNormCache, BatchNormGrads, BatchNormLayer, DEFAULT_EPSILON, DEFAULT_MOMENTUM,
};
pub use conv1d::{Conv1DCache, Conv1DGrads, Conv1DLayer};
pub use dense::{DenseCache, DenseGrads, DenseLayer};
pub use dropout::{DropoutCache, DropoutLayer, DEFAULT_DROPOUT_RATE};
pub use init::{he_init, he_std};
pub use loss::{softmax, softmax_cross_entropy, CrossEntropy};
pub use residual::{ResidualBlock, ResidualCache, ResidualGrads};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix2D, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Role of a parameter block. Only `Weight` blocks are L2-penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Read-only view of one parameter block. Vectors have shape `(1, len)`.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    pub kind: ParamKind,
    pub shape: (usize, usize),
    pub values: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Residual(ResidualBlock),
    BatchNorm(BatchNormLayer),
    Relu,
    Dropout(DropoutLayer),
    Conv1D(Conv1DLayer),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense(DenseCache),
    Residual(ResidualCache),
    BatchNorm(BatchNormCache),
    Relu(Matrix2D),
    Dropout(DropoutCache),
    Conv1D(Conv1DCache),
}

fn row_block(v: Vec<f64>) -> Matrix2D {
    let n = v.len();
    Matrix2D::from_raw(1, n, v)
}

impl Layer {
    /// Values this layer feeds through a ReLU, taken from a forward cache.
    /// Their signs fix the piecewise-linear region the layer is in.
    pub fn relu_inputs<'a>(&self, cache: &'a LayerCache) -> Vec<&'a Matrix2D> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense(c)) if d.activation == Activation::Relu => {
                vec![c.pre_activation()]
            }
            (Layer::Residual(r), LayerCache::Residual(c)) if r.activation == Activation::Relu => {
                c.pre_activations().to_vec()
            }
            (Layer::Relu, LayerCache::Relu(x)) => vec![x],
            _ => Vec::new(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Residual(_) => "residual",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu => "relu",
            Layer::Dropout(_) => "dropout",
            Layer::Conv1D(_) => "conv1d",
        }
    }

    /// Output width for an input of `input_dim` columns.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        let check = |expected: usize| {
            if expected == input_dim {
                Ok(())
            } else {
                Err(Error::shape(format!(
                    "{} layer expects width {expected}, previous layer yields {input_dim}",
                    self.type_name()
                )))
            }
        };
        match self {
            Layer::Dense(d) => check(d.in_dim()).map(|_| d.out_dim()),
            Layer::Residual(r) => check(r.dim()).map(|_| r.dim()),
            Layer::BatchNorm(b) => check(b.dim()).map(|_| b.dim()),
            Layer::Relu | Layer::Dropout(_) => Ok(input_dim),
            Layer::Conv1D(c) => c.output_dim(input_dim),
        }
    }

    /// Training-capable forward pass.
    ///
    /// Batch norm falls back to its running statistics (without updating them)
    /// when the batch has a single row.
    pub fn forward(
        &mut self,
        x: &Matrix2D,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Matrix2D, LayerCache)> {
        Ok(match self {
            Layer::Dense(d) => {
                let (y, c) = d.forward(x)?;
                (y, LayerCache::Dense(c))
            }
            Layer::Residual(r) => {
                let (y, c) = r.forward(x)?;
                (y, LayerCache::Residual(c))
            }
            Layer::BatchNorm(b) => {
                let (y, c) = if mode == Mode::Train && x.rows() >= 2 {
                    b.forward_train(x)?
                } else {
                    b.forward_infer(x)?
                };
                (y, LayerCache::BatchNorm(c))
            }
            Layer::Relu => (relu(x), LayerCache::Relu(x.clone())),
            Layer::Dropout(d) => {
                let (y, c) = d.forward(x, mode, rng);
                (y, LayerCache::Dropout(c))
            }
            Layer::Conv1D(c) => {
                let (y, cache) = c.forward(x)?;
                (y, LayerCache::Conv1D(cache))
            }
        })
    }

    /// Inference-mode forward pass; never mutates the layer.
    pub fn infer(&self, x: &Matrix2D) -> Result<Matrix2D> {
        Ok(match self {
            Layer::Dense(d) => d.forward(x)?.0,
            Layer::Residual(r) => r.forward(x)?.0,
            Layer::BatchNorm(b) => b.forward_infer(x)?.0,
            Layer::Relu => relu(x),
            Layer::Dropout(_) => x.clone(),
            Layer::Conv1D(c) => c.forward(x)?.0,
        })
    }

    /// Returns the input gradient and one gradient block per parameter block,
    /// in [`Layer::params`] order.
    pub fn backward(
        &self,
        cache: &LayerCache,
        upstream: &Matrix2D,
    ) -> Result<(Matrix2D, Vec<Matrix2D>)> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense(c)) => {
                let (gx, g) = d.backward(c, upstream)?;
                Ok((gx, vec![g.weights, row_block(g.bias)]))
            }
            (Layer::Residual(r), LayerCache::Residual(c)) => {
                let (gx, g) = r.backward(c, upstream)?;
                Ok((gx, vec![g.w1, row_block(g.b1), g.w2, row_block(g.b2)]))
            }
            (Layer::BatchNorm(b), LayerCache::BatchNorm(c)) => {
                let (gx, g) = b.backward(c, upstream)?;
                Ok((gx, vec![row_block(g.gamma), row_block(g.beta)]))
            }
            (Layer::Relu, LayerCache::Relu(x)) => {
                if x.shape() != upstream.shape() {
                    return Err(Error::shape(format!(
                        "upstream {:?} does not match relu output {:?}",
                        upstream.shape(),
                        x.shape()
                    )));
                }
                Ok((relu_backward(x, upstream), Vec::new()))
            }
            (Layer::Dropout(d), LayerCache::Dropout(c)) => {
                Ok((d.backward(c, upstream)?, Vec::new()))
            }
            (Layer::Conv1D(l), LayerCache::Conv1D(c)) => {
                let (gx, g) = l.backward(c, upstream)?;
                Ok((gx, vec![g.kernels, row_block(g.bias)]))
            }
            (layer, _) => Err(Error::State(format!(
                "cache does not belong to a {} layer",
                layer.type_name()
            ))),
        }
    }

    pub fn params(&self) -> Vec<ParamView<'_>> {
        fn mat(kind: ParamKind, m: &Matrix2D) -> ParamView<'_> {
            ParamView {
                kind,
                shape: m.shape(),
                values: m.as_slice(),
            }
        }
        fn vec(kind: ParamKind, v: &[f64]) -> ParamView<'_> {
            ParamView {
                kind,
                shape: (1, v.len()),
                values: v,
            }
        }
        use ParamKind::*;
        match self {
            Layer::Dense(d) => vec![mat(Weight, &d.weights), vec(Bias, &d.bias)],
            Layer::Residual(r) => vec![
                mat(Weight, &r.w1),
                vec(Bias, &r.b1),
                mat(Weight, &r.w2),
                vec(Bias, &r.b2),
            ],
            Layer::BatchNorm(b) => vec![vec(Gamma, &b.gamma), vec(Beta, &b.beta)],
            Layer::Relu | Layer::Dropout(_) => Vec::new(),
            Layer::Conv1D(c) => vec![mat(Weight, &c.kernels), vec(Bias, &c.bias)],
        }
    }

    pub fn params_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        use ParamKind::*;
        match self {
            Layer::Dense(d) => vec![(Weight, d.weights.as_mut_slice()), (Bias, &mut d.bias[..])],
            Layer::Residual(r) => vec![
                (Weight, r.w1.as_mut_slice()),
                (Bias, &mut r.b1[..]),
                (Weight, r.w2.as_mut_slice()),
                (Bias, &mut r.b2[..]),
            ],
            Layer::BatchNorm(b) => vec![(Gamma, &mut b.gamma[..]), (Beta, &mut b.beta[..])],
            Layer::Relu | Layer::Dropout(_) => Vec::new(),
            Layer::Conv1D(c) => vec![(Weight, c.kernels.as_mut_slice()), (Bias, &mut c.bias[..])],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.values.len()).sum()
    }
}
