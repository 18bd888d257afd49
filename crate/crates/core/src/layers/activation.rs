use serde::{Deserialize, Serialize};

use crate::ndcore::Matrix2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative at `v`; the ReLU kink at 0 takes slope 0.
    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn relu(x: &Matrix2D) -> Matrix2D {
    x.map(|v| v.max(0.0))
}

/// Passes `upstream` where `x > 0` and zeroes it elsewhere.
pub fn relu_backward(x: &Matrix2D, upstream: &Matrix2D) -> Matrix2D {
    debug_assert_eq!(x.shape(), upstream.shape());
    let data = x
        .as_slice()
        .iter()
        .zip(upstream.as_slice())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Matrix2D::from_raw(x.rows(), x.cols(), data)
}

/// Multiplies `upstream` by the activation derivative at `pre`.
pub(crate) fn activation_backward(
    act: Activation,
    pre: &Matrix2D,
    upstream: &Matrix2D,
) -> Matrix2D {
    match act {
        Activation::Identity => upstream.clone(),
        Activation::Relu => relu_backward(pre, upstream),
    }
}

pub(crate) fn activate(act: Activation, pre: &Matrix2D) -> Matrix2D {
    match act {
        Activation::Identity => pre.clone(),
        Activation::Relu => relu(pre),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_backward() {
        let x = Matrix2D::from_rows(&[[-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let x = Matrix2D::from_rows(&[[-1.0, 2.0]]).unwrap();
        let up = Matrix2D::from_rows(&[[5.0, 5.0]]).unwrap();
        assert_eq!(relu_backward(&x, &up).as_slice(), &[0.0, 5.0]);
    }

    #[test]
    fn relu_matches_finite_differences_away_from_kink() {
        let h = 1e-5;
        for &v in &[-2.0, -0.3, 0.1, 1.7] {
            let numeric =
                (Activation::Relu.apply(v + h) - Activation::Relu.apply(v - h)) / (2.0 * h);
            assert!((numeric - Activation::Relu.derivative(v)).abs() < 1e-8);
        }
    }
}
