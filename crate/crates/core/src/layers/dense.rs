use crate::error::{Error, Result};
use crate::layers::activation::{activate, activation_backward, Activation};
use crate::layers::init::he_init;
use crate::ndcore::{Matrix2D, Rng};

/// Fully connected layer computing `f(x · Wᵀ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: Matrix2D,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Matrix2D,
    pre_activation: Matrix2D,
}

impl DenseCache {
    pub fn pre_activation(&self) -> &Matrix2D {
        &self.pre_activation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Matrix2D,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix2D, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(format!(
                "bias of length {} for {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// He-initialized weights and zero bias.
    pub fn he(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::new(
            he_init(in_dim, out_dim, rng)?,
            vec![0.0; out_dim],
            activation,
        )
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix2D) -> Result<(Matrix2D, DenseCache)> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got batch of {}x{}",
                self.in_dim(),
                x.rows(),
                x.cols()
            )));
        }
        let mut pre = x.matmul_transposed(&self.weights)?;
        pre.add_row_broadcast(&self.bias)?;
        let out = activate(self.activation, &pre);
        Ok((
            out,
            DenseCache {
                input: x.clone(),
                pre_activation: pre,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &DenseCache,
        upstream: &Matrix2D,
    ) -> Result<(Matrix2D, DenseGrads)> {
        if upstream.shape() != cache.pre_activation.shape() {
            return Err(Error::shape(format!(
                "upstream {:?} does not match dense output {:?}",
                upstream.shape(),
                cache.pre_activation.shape()
            )));
        }
        let dz = activation_backward(self.activation, &cache.pre_activation, upstream);
        let grad_w = dz.transposed_matmul(&cache.input)?;
        let grad_b = dz.column_sums();
        let grad_x = dz.matmul(&self.weights)?;
        Ok((
            grad_x,
            DenseGrads {
                weights: grad_w,
                bias: grad_b,
            },
        ))
    }
}
