//! Test-only oracles. Nothing here calls into the crate's own gradient code.
#![allow(dead_code)]

use tcn_core::layers::{softmax_cross_entropy, Mode};
use tcn_core::{Matrix2D, ModelGraph, Rng};

pub const H: f64 = 1e-5;

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix2D {
    Matrix2D::new(rows, cols, rng.normal(rows * cols, 0.0, 1.0).unwrap()).unwrap()
}

/// `Σ out ⊙ weights`; its gradient with respect to `out` is `weights`.
pub fn project(out: &Matrix2D, weights: &Matrix2D) -> f64 {
    out.as_slice()
        .iter()
        .zip(weights.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

/// Mean cross-entropy of a dropout-free training-mode forward pass.
pub fn model_loss(model: &mut ModelGraph, x: &Matrix2D, labels: &[usize]) -> f64 {
    let (_, cache) = model.forward(x, Mode::Train, &mut Rng::new(0)).unwrap();
    softmax_cross_entropy(cache.logits(), labels).unwrap().loss
}

/// Finite-difference gradient of the model loss over every parameter, block by
/// block. `None` marks entries where the left and right one-sided differences
/// disagree, i.e. the probe straddles a kink of the piecewise-linear network.
pub fn model_numeric_gradient(
    model: &ModelGraph,
    x: &Matrix2D,
    labels: &[usize],
    h: f64,
) -> Vec<Vec<Option<f64>>> {
    let mut m = model.clone();
    let base = model_loss(&mut m, x, labels);
    let sizes: Vec<usize> = m.params().iter().map(|p| p.values.len()).collect();
    let mut out = Vec::new();
    for (b, &n) in sizes.iter().enumerate() {
        let mut block = Vec::with_capacity(n);
        for j in 0..n {
            let orig = m.params_mut()[b].1[j];
            m.params_mut()[b].1[j] = orig + h;
            let plus = model_loss(&mut m, x, labels);
            m.params_mut()[b].1[j] = orig - h;
            let minus = model_loss(&mut m, x, labels);
            m.params_mut()[b].1[j] = orig;
            let right = (plus - base) / h;
            let left = (base - minus) / h;
            let smooth = rel_err(right, left) < 1e-2 || (right - left).abs() < 1e-6;
            block.push(smooth.then_some((plus - minus) / (2.0 * h)));
        }
        out.push(block);
    }
    out
}

/// Worst relative error over the entries the oracle could evaluate.
pub fn max_rel_err_smooth(analytic: &[f64], numeric: &[Option<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter_map(|(&a, n)| n.map(|n| rel_err(a, n)))
        .fold(0.0, f64::max)
}

pub fn labels_for(rows: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    (0..rows).map(|_| rng.below(classes)).collect()
}
