use crate::error::{Error, Result};
use crate::ndcore::{Matrix2D, Rng};

/// He-normal weights, `fan_out × fan_in`, drawn from `N(0, 2 / fan_in)`.
pub fn he_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Matrix2D> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::arg(format!(
            "he_init needs positive fan_in and fan_out, got {fan_in} and {fan_out}"
        )));
    }
    let std = he_std(fan_in);
    let data = rng.normal(fan_in * fan_out, 0.0, std)?;
    Matrix2D::new(fan_out, fan_in, data)
}

pub fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}
