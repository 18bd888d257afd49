use crate::error::{Error, Result};
use crate::layers::activation::{activate, activation_backward, Activation};
use crate::layers::init::he_init;
use crate::ndcore::{Matrix2D, Rng};

/// Dimension-preserving block `f(W₂ f(W₁x + b₁) + b₂) + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub w1: Matrix2D,
    pub b1: Vec<f64>,
    pub w2: Matrix2D,
    pub b2: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ResidualCache {
    input: Matrix2D,
    pre1: Matrix2D,
    hidden: Matrix2D,
    pre2: Matrix2D,
}

impl ResidualCache {
    /// Inputs to the inner and outer activation.
    pub fn pre_activations(&self) -> [&Matrix2D; 2] {
        [&self.pre1, &self.pre2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrads {
    pub w1: Matrix2D,
    pub b1: Vec<f64>,
    pub w2: Matrix2D,
    pub b2: Vec<f64>,
}

impl ResidualGrads {
    pub fn is_zero(&self) -> bool {
        self.w1.as_slice().iter().all(|&v| v == 0.0)
            && self.w2.as_slice().iter().all(|&v| v == 0.0)
            && self.b1.iter().all(|&v| v == 0.0)
            && self.b2.iter().all(|&v| v == 0.0)
    }
}

impl ResidualBlock {
    pub fn new(
        w1: Matrix2D,
        b1: Vec<f64>,
        w2: Matrix2D,
        b2: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let d = w1.rows();
        if w1.shape() != (d, d) || w2.shape() != (d, d) {
            return Err(Error::shape(format!(
                "residual weights must both be square {d}x{d}, got {:?} and {:?}",
                w1.shape(),
                w2.shape()
            )));
        }
        if b1.len() != d || b2.len() != d {
            return Err(Error::shape(format!(
                "residual biases must have length {d}, got {} and {}",
                b1.len(),
                b2.len()
            )));
        }
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            activation,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            w1: Matrix2D::zeros(dim, dim),
            b1: vec![0.0; dim],
            w2: Matrix2D::zeros(dim, dim),
            b2: vec![0.0; dim],
            activation: Activation::Relu,
        }
    }

    pub fn he(dim: usize, rng: &mut Rng) -> Result<Self> {
        let w1 = he_init(dim, dim, rng)?;
        let w2 = he_init(dim, dim, rng)?;
        Self::new(w1, vec![0.0; dim], w2, vec![0.0; dim], Activation::Relu)
    }

    pub fn dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn forward(&self, x: &Matrix2D) -> Result<(Matrix2D, ResidualCache)> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "residual block of width {} got {}x{}",
                self.dim(),
                x.rows(),
                x.cols()
            )));
        }
        let mut pre1 = x.matmul_transposed(&self.w1)?;
        pre1.add_row_broadcast(&self.b1)?;
        let hidden = activate(self.activation, &pre1);
        let mut pre2 = hidden.matmul_transposed(&self.w2)?;
        pre2.add_row_broadcast(&self.b2)?;
        let mut out = activate(self.activation, &pre2);
        out.add_assign(x)?;
        Ok((
            out,
            ResidualCache {
                input: x.clone(),
                pre1,
                hidden,
                pre2,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &ResidualCache,
        upstream: &Matrix2D,
    ) -> Result<(Matrix2D, ResidualGrads)> {
        if upstream.shape() != cache.input.shape() {
            return Err(Error::shape(format!(
                "upstream {:?} does not match residual output {:?}",
                upstream.shape(),
                cache.input.shape()
            )));
        }
        let d_pre2 = activation_backward(self.activation, &cache.pre2, upstream);
        let grad_w2 = d_pre2.transposed_matmul(&cache.hidden)?;
        let grad_b2 = d_pre2.column_sums();
        let d_hidden = d_pre2.matmul(&self.w2)?;
        let d_pre1 = activation_backward(self.activation, &cache.pre1, &d_hidden);
        let grad_w1 = d_pre1.transposed_matmul(&cache.input)?;
        let grad_b1 = d_pre1.column_sums();
        let branch = d_pre1.matmul(&self.w1)?;

        // skip path carries upstream through unchanged
        let mut grad_x = upstream.clone();
        grad_x.add_assign(&branch)?;
        Ok((
            grad_x,
            ResidualGrads {
                w1: grad_w1,
                b1: grad_b1,
                w2: grad_w2,
                b2: grad_b2,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_block_is_identity() {
        let block = ResidualBlock::zeros(3);
        let x = Matrix2D::from_rows(&[[1.5, -2.0, 0.25], [-7.0, 3.0, 1e-3]]).unwrap();
        let (y, cache) = block.forward(&x).unwrap();
        assert_eq!(y, x);
        let up = Matrix2D::from_rows(&[[0.1, -0.2, 0.3], [4.0, 5.0, -6.0]]).unwrap();
        let (gx, grads) = block.backward(&cache, &up).unwrap();
        assert_eq!(gx, up);
        assert!(grads.is_zero());
    }

    #[test]
    fn scalar_example() {
        let one = Matrix2D::from_rows(&[[1.0]]).unwrap();
        let block =
            ResidualBlock::new(one.clone(), vec![0.0], one, vec![0.0], Activation::Relu).unwrap();
        let (y, _) = block
            .forward(&Matrix2D::from_rows(&[[2.0]]).unwrap())
            .unwrap();
        assert_eq!(y.as_slice(), &[4.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_param_grads() {
        let block = ResidualBlock::he(4, &mut Rng::new(3)).unwrap();
        let x = Matrix2D::new(3, 4, Rng::new(4).normal(12, 0.0, 1.0).unwrap()).unwrap();
        let (_, cache) = block.forward(&x).unwrap();
        let (_, grads) = block.backward(&cache, &Matrix2D::zeros(3, 4)).unwrap();
        assert!(grads.is_zero());
    }

    #[test]
    fn rejects_non_square() {
        let err = ResidualBlock::new(
            Matrix2D::zeros(2, 3),
            vec![0.0; 2],
            Matrix2D::zeros(2, 2),
            vec![0.0; 2],
            Activation::Relu,
        );
        assert!(matches!(err, Err(Error::Shape(_))));
        let block = ResidualBlock::zeros(2);
        assert!(block.forward(&Matrix2D::zeros(1, 3)).is_err());
    }
}
