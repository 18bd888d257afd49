//! Dense linear algebra and seeded randomness.

mod matrix;
mod rng;

pub use matrix::{dot, Matrix2D};
pub use rng::{Rng, RNG_ALGORITHM};
