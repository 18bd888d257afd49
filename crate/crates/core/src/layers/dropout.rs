use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::ndcore::{Matrix2D, Rng};

pub const DEFAULT_DROPOUT_RATE: f64 = 0.5;

/// Inverted dropout: survivors are scaled by `1 / (1 − rate)` during
/// training, so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutLayer {
    rate: f64,
}

/// Per-entry multiplier applied in the forward pass (0 or `1 / (1 − rate)`).
#[derive(Debug, Clone)]
pub struct DropoutCache {
    mask: Option<Matrix2D>,
}

impl DropoutCache {
    pub fn mask(&self) -> Option<&Matrix2D> {
        self.mask.as_ref()
    }
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&self, x: &Matrix2D, mode: Mode, rng: &mut Rng) -> (Matrix2D, DropoutCache) {
        if mode == Mode::Infer || self.rate == 0.0 {
            return (x.clone(), DropoutCache { mask: None });
        }
        let scale = 1.0 / (1.0 - self.rate);
        let mask_data = rng
            .uniform(x.len())
            .into_iter()
            .map(|u| if u < self.rate { 0.0 } else { scale })
            .collect();
        let mask = Matrix2D::from_raw(x.rows(), x.cols(), mask_data);
        let out = x.mul(&mask).expect("mask built with the input's shape");
        (out, DropoutCache { mask: Some(mask) })
    }

    pub fn backward(&self, cache: &DropoutCache, upstream: &Matrix2D) -> Result<Matrix2D> {
        match &cache.mask {
            None => Ok(upstream.clone()),
            Some(mask) => upstream.mul(mask),
        }
    }
}
