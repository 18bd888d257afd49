//! Batch normalization over the batch (row) axis.
//!
//! Training mode normalizes each column by the batch mean and the biased
//! (divide-by-`b`) batch variance, then folds the batch statistics into the
//! running estimates with `running = momentum·running + (1 − momentum)·batch`.
//! The running variance receives the unbiased batch variance. Inference mode
//! normalizes with the running estimates.

use crate::error::{Error, Result};
use crate::ndcore::Matrix2D;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Matrix2D,
    inv_std: Vec<f64>,
    /// Whether batch statistics were used; backward differs accordingly.
    batch_stats: bool,
}

impl BatchNormCache {
    pub fn normalized(&self) -> &Matrix2D {
        &self.normalized
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check_width(&self, x: &Matrix2D) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "batch norm over {} features got {}x{}",
                self.dim(),
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Matrix2D) -> Result<(Matrix2D, BatchNormCache)> {
        self.check_width(x)?;
        let b = x.rows();
        if b < 2 {
            return Err(Error::arg(format!(
                "batch norm in training mode needs at least 2 rows, got {b}"
            )));
        }
        let bf = b as f64;
        let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / bf).collect();
        let mut var = vec![0.0; self.dim()];
        for row in x.iter_rows() {
            for ((v, &xv), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xv - mu) * (xv - mu);
            }
        }
        for v in &mut var {
            *v /= bf;
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();

        let (out, normalized) = self.normalize(x, &mean, &inv_std);

        let keep = self.momentum;
        for j in 0..self.dim() {
            self.running_mean[j] = keep * self.running_mean[j] + (1.0 - keep) * mean[j];
            let unbiased = var[j] * bf / (bf - 1.0);
            self.running_var[j] = keep * self.running_var[j] + (1.0 - keep) * unbiased;
        }

        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_stats: true,
            },
        ))
    }

    /// Normalizes with the running estimates. The returned cache supports
    /// backpropagation through the fixed affine map.
    pub fn forward_infer(&self, x: &Matrix2D) -> Result<(Matrix2D, BatchNormCache)> {
        self.check_width(x)?;
        let inv_std: Vec<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let (out, normalized) = self.normalize(x, &self.running_mean, &inv_std);
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_stats: false,
            },
        ))
    }

    fn normalize(&self, x: &Matrix2D, mean: &[f64], inv_std: &[f64]) -> (Matrix2D, Matrix2D) {
        let mut normalized = x.clone();
        let mut out = x.clone();
        for r in 0..x.rows() {
            let xr = x.row(r);
            let nr = normalized.row_mut(r);
            for j in 0..xr.len() {
                nr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let or = out.row_mut(r);
            for j in 0..xr.len() {
                or[j] = self.gamma[j] * (xr[j] - mean[j]) * inv_std[j] + self.beta[j];
            }
        }
        (out, normalized)
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        upstream: &Matrix2D,
    ) -> Result<(Matrix2D, BatchNormGrads)> {
        if upstream.shape() != cache.normalized.shape() {
            return Err(Error::shape(format!(
                "upstream {:?} does not match batch norm output {:?}",
                upstream.shape(),
                cache.normalized.shape()
            )));
        }
        let d = self.dim();
        let b = upstream.rows() as f64;
        let xhat = &cache.normalized;

        let grad_beta = upstream.column_sums();
        let mut grad_gamma = vec![0.0; d];
        for (urow, nrow) in upstream.iter_rows().zip(xhat.iter_rows()) {
            for j in 0..d {
                grad_gamma[j] += urow[j] * nrow[j];
            }
        }

        let mut grad_x = Matrix2D::zeros(upstream.rows(), d);
        if cache.batch_stats {
            // dx = γ·σ⁻¹/b · (b·g − Σg − x̂·Σ(g·x̂))
            for r in 0..upstream.rows() {
                let urow = upstream.row(r);
                let nrow = xhat.row(r);
                let grow = grad_x.row_mut(r);
                for j in 0..d {
                    grow[j] = self.gamma[j] * cache.inv_std[j] / b
                        * (b * urow[j] - grad_beta[j] - nrow[j] * grad_gamma[j]);
                }
            }
        } else {
            for r in 0..upstream.rows() {
                let urow = upstream.row(r);
                let grow = grad_x.row_mut(r);
                for j in 0..d {
                    grow[j] = urow[j] * self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        Ok((
            grad_x,
            BatchNormGrads {
                gamma: grad_gamma,
                beta: grad_beta,
            },
        ))
    }
}
