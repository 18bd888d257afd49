//! Valid (unpadded) 1-D cross-correlation over the feature axis.
//!
//! Output layout is kernel-major: for kernel `k` and position `l`, the value
//! lands in column `k·L_out + l`, where `L_out = ⌊(n − width) / stride⌋ + 1`.

use crate::error::{Error, Result};
use crate::layers::init::he_init;
use crate::ndcore::{Matrix2D, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DLayer {
    /// `n_kernels × width`.
    pub kernels: Matrix2D,
    pub bias: Vec<f64>,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1DCache {
    input: Matrix2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DGrads {
    pub kernels: Matrix2D,
    pub bias: Vec<f64>,
}

impl Conv1DLayer {
    pub fn new(kernels: Matrix2D, bias: Vec<f64>, stride: usize) -> Result<Self> {
        if kernels.cols() == 0 || kernels.rows() == 0 {
            return Err(Error::arg("conv1d needs at least one kernel of width >= 1"));
        }
        if stride == 0 {
            return Err(Error::arg("conv1d stride must be >= 1"));
        }
        if bias.len() != kernels.rows() {
            return Err(Error::shape(format!(
                "bias of length {} for {} kernels",
                bias.len(),
                kernels.rows()
            )));
        }
        Ok(Self {
            kernels,
            bias,
            stride,
        })
    }

    pub fn he(n_kernels: usize, width: usize, stride: usize, rng: &mut Rng) -> Result<Self> {
        Self::new(
            he_init(width, n_kernels, rng)?,
            vec![0.0; n_kernels],
            stride,
        )
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.rows()
    }

    pub fn width(&self) -> usize {
        self.kernels.cols()
    }

    pub fn output_len(&self, n: usize) -> Result<usize> {
        if n < self.width() {
            return Err(Error::shape(format!(
                "input of {n} features is shorter than kernel width {}",
                self.width()
            )));
        }
        Ok((n - self.width()) / self.stride + 1)
    }

    pub fn output_dim(&self, n: usize) -> Result<usize> {
        Ok(self.n_kernels() * self.output_len(n)?)
    }

    pub fn forward(&self, x: &Matrix2D) -> Result<(Matrix2D, Conv1DCache)> {
        let len = self.output_len(x.cols())?;
        let k = self.n_kernels();
        let w = self.width();
        let mut out = Matrix2D::zeros(x.rows(), k * len);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let orow = out.row_mut(r);
            for kk in 0..k {
                let kernel = self.kernels.row(kk);
                for l in 0..len {
                    let start = l * self.stride;
                    let window = &xr[start..start + w];
                    orow[kk * len + l] =
                        window.iter().zip(kernel).map(|(a, b)| a * b).sum::<f64>() + self.bias[kk];
                }
            }
        }
        Ok((out, Conv1DCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &Conv1DCache,
        upstream: &Matrix2D,
    ) -> Result<(Matrix2D, Conv1DGrads)> {
        let x = &cache.input;
        let len = self.output_len(x.cols())?;
        let k = self.n_kernels();
        let w = self.width();
        if upstream.shape() != (x.rows(), k * len) {
            return Err(Error::shape(format!(
                "upstream {:?} does not match conv1d output {:?}",
                upstream.shape(),
                (x.rows(), k * len)
            )));
        }
        let mut grad_x = Matrix2D::zeros(x.rows(), x.cols());
        let mut grad_k = Matrix2D::zeros(k, w);
        let mut grad_b = vec![0.0; k];
        for r in 0..x.rows() {
            let xr = x.row(r);
            let ur = upstream.row(r);
            for kk in 0..k {
                for l in 0..len {
                    let g = ur[kk * len + l];
                    let start = l * self.stride;
                    grad_b[kk] += g;
                    for t in 0..w {
                        grad_k.as_mut_slice()[kk * w + t] += g * xr[start + t];
                        grad_x.as_mut_slice()[r * x.cols() + start + t] +=
                            g * self.kernels.get(kk, t);
                    }
                }
            }
        }
        Ok((
            grad_x,
            Conv1DGrads {
                kernels: grad_k,
                bias: grad_b,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_kernel() {
        let layer =
            Conv1DLayer::new(Matrix2D::from_rows(&[[1.0, 1.0]]).unwrap(), vec![0.0], 1).unwrap();
        let (y, _) = layer
            .forward(&Matrix2D::from_rows(&[[1.0, 2.0, 3.0]]).unwrap())
            .unwrap();
        assert_eq!(y.as_slice(), &[3.0, 5.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let layer = Conv1DLayer::new(Matrix2D::from_rows(&[[1.0]]).unwrap(), vec![0.0], 1).unwrap();
        let x = Matrix2D::from_rows(&[[0.5, -1.0, 7.0, 2.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().0, x);
    }

    #[test]
    fn stride_and_layout() {
        let kernels = Matrix2D::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let layer = Conv1DLayer::new(kernels, vec![0.0, 10.0], 2).unwrap();
        let x = Matrix2D::from_rows(&[[1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        // L_out = 2; kernel 0 picks positions 0,2; kernel 1 picks 1,3 plus bias
        assert_eq!(y.as_slice(), &[1.0, 3.0, 12.0, 14.0]);
    }

    #[test]
    fn too_short_input() {
        let layer = Conv1DLayer::he(2, 3, 1, &mut Rng::new(0)).unwrap();
        assert!(matches!(
            layer.forward(&Matrix2D::zeros(1, 2)),
            Err(Error::Shape(_))
        ));
        assert!(Conv1DLayer::new(Matrix2D::zeros(1, 1), vec![0.0], 0).is_err());
    }
}
