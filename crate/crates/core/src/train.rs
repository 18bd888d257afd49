//! Optimization and evaluation: Adam, L2 weight penalty, the mini-batch loop
//! with early stopping, metrics, and finite-difference gradient checking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_split_indices, Dataset};
use crate::error::{Error, Result};
use crate::layers::{softmax_cross_entropy, Mode, ParamKind, ParamView};
use crate::model::{argmax_rows, Gradients, ModelGraph};
use crate::ndcore::{Matrix2D, Rng};

/// Validation loss must drop by at least this much to count as improvement.
pub const MIN_DELTA: f64 = 1e-6;

/// Largest model `grad_check` will perturb exhaustively.
pub const GRAD_CHECK_MAX_PARAMS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub l2_lambda: f64,
    pub early_stop_patience: usize,
    pub val_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 10,
            max_epochs: 200,
            l2_lambda: 1e-4,
            early_stop_patience: 20,
            val_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0) {
            problems.push(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            problems.push(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            ));
        }
        if !(self.l2_lambda >= 0.0) {
            problems.push(format!("l2_lambda must be >= 0, got {}", self.l2_lambda));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push(format!(
                "beta1 and beta2 must be in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if !(self.adam_epsilon > 0.0) {
            problems.push(format!(
                "adam_epsilon must be > 0, got {}",
                self.adam_epsilon
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(problems.join("; ")))
        }
    }
}

/// First and second moment accumulators, one per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn for_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let first: Vec<Vec<f64>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            second: first.clone(),
            first,
            step: 0,
        }
    }

    pub fn for_model(model: &ModelGraph) -> Self {
        Self::for_sizes(model.params().iter().map(|p| p.values.len()))
    }
}

/// One bias-corrected Adam update over aligned parameter and gradient blocks.
pub fn adam_update(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::shape(format!(
            "{} parameter blocks, {} gradient blocks, {} optimizer blocks",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::shape(format!(
                "block {i}: {} parameters, {} gradients, {} optimizer slots",
                p.len(),
                g.len(),
                state.first[i].len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / correction1;
            let v_hat = v[j] / correction2;
            p[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
    Ok(())
}

/// Applies [`adam_update`] to every parameter block of `model`.
pub fn adam_step(
    model: &mut ModelGraph,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let grad_slices: Vec<&[f64]> = grads.blocks().iter().map(Matrix2D::as_slice).collect();
    let mut params: Vec<&mut [f64]> = model.params_mut().into_iter().map(|(_, p)| p).collect();
    adam_update(&mut params, &grad_slices, state, cfg)
}

/// `(λ/2)·Σw²` over weight blocks only, and its gradient `λ·w` (zero for
/// biases and batch-norm scale/shift).
pub fn l2_penalty(params: &[ParamView<'_>], lambda: f64) -> Result<(f64, Gradients)> {
    if !(lambda >= 0.0) {
        return Err(Error::arg(format!("l2 lambda must be >= 0, got {lambda}")));
    }
    let mut penalty = 0.0;
    let mut blocks = Vec::with_capacity(params.len());
    for p in params {
        let (rows, cols) = p.shape;
        if p.kind == ParamKind::Weight {
            penalty += p.values.iter().map(|w| w * w).sum::<f64>();
            blocks.push(Matrix2D::from_raw(
                rows,
                cols,
                p.values.iter().map(|w| lambda * w).collect(),
            ));
        } else {
            blocks.push(Matrix2D::zeros(rows, cols));
        }
    }
    Ok((0.5 * lambda * penalty, Gradients(blocks)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch run (1-based).
    pub stopped_epoch: usize,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
    /// Loss monitored for early stopping at `best_epoch`.
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[i][j]` counts samples of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<usize>>,
}

/// Inference-mode accuracy, mean cross-entropy and confusion matrix.
pub fn evaluate(model: &ModelGraph, ds: &Dataset) -> Result<Metrics> {
    evaluate_matrix(model, &ds.features, &ds.labels)
}

pub fn evaluate_matrix(model: &ModelGraph, x: &Matrix2D, labels: &[usize]) -> Result<Metrics> {
    if labels.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let logits = model.logits(x)?;
    let ce = softmax_cross_entropy(&logits, labels)?;
    let predicted = argmax_rows(&ce.probs);
    let c = model.n_classes();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0usize;
    for (&t, &p) in labels.iter().zip(&predicted) {
        confusion[t][p] += 1;
        if t == p {
            correct += 1;
        }
    }
    Ok(Metrics {
        accuracy: correct as f64 / labels.len() as f64,
        mean_loss: ce.loss,
        confusion,
    })
}

fn check_trainable(ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    let present = ds.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::arg("training set must contain at least 2 classes"));
    }
    Ok(())
}

/// Splits off a stratified validation set of `cfg.val_fraction`, seeded from
/// `cfg.seed`. With a zero fraction the validation set is `None`.
pub fn split_validation(ds: &Dataset, cfg: &TrainConfig) -> Result<(Dataset, Option<Dataset>)> {
    check_trainable(ds)?;
    if cfg.val_fraction == 0.0 {
        return Ok((ds.clone(), None));
    }
    let mut rng = Rng::new(cfg.seed);
    let [train, val, _] = stratified_split_indices(
        &ds.labels,
        ds.n_classes(),
        [1.0 - cfg.val_fraction, cfg.val_fraction, 0.0],
        &mut rng,
    )?;
    Ok((ds.subset(&train), Some(ds.subset(&val))))
}

/// Splits a validation set off `train_set` and trains with [`fit`].
pub fn train_loop(
    model: ModelGraph,
    train_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelGraph, TrainHistory)> {
    cfg.validate()?;
    let (train, val) = split_validation(train_set, cfg)?;
    fit(model, &train, val.as_ref(), cfg)
}

/// Mini-batch Adam training with L2 and early stopping on validation loss
/// (training loss when there is no validation set). Returns the parameters
/// from the best epoch.
pub fn fit(
    mut model: ModelGraph,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(ModelGraph, TrainHistory)> {
    cfg.validate()?;
    check_trainable(train)?;
    if train.n_features() != model.input_dim() {
        return Err(Error::shape(format!(
            "model takes {} features, training data has {}",
            model.input_dim(),
            train.n_features()
        )));
    }

    // independent streams for shuffling and dropout, both derived from the seed
    let mut root = Rng::new(cfg.seed ^ 0x5eed_7a11_0000_0001);
    let mut shuffle_rng = root.fork();
    let mut dropout_rng = root.fork();

    let mut state = AdamState::for_model(&model);
    let mut order: Vec<usize> = (0..train.n_samples()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_loss: f64::INFINITY,
    };
    let mut best_model = model.clone();
    let mut since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        if cfg.shuffle_each_epoch {
            shuffle_rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (loss, mut grads) = model.loss_and_gradients(&x, &y, &mut dropout_rng)?;
            if cfg.l2_lambda > 0.0 {
                let (_, l2) = l2_penalty(&model.params(), cfg.l2_lambda)?;
                for (g, extra) in grads.blocks_mut().iter_mut().zip(l2.blocks()) {
                    g.add_assign(extra)?;
                }
            }
            adam_step(&mut model, &grads, &mut state, cfg)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.n_samples() as f64;
        if !train_loss.is_finite() {
            return Err(Error::State(format!("training diverged at epoch {epoch}")));
        }

        let val_metrics = val.map(|v| evaluate(&model, v)).transpose()?;
        let monitored = val_metrics.as_ref().map_or(train_loss, |m| m.mean_loss);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val_metrics.as_ref().map(|m| m.mean_loss),
            val_accuracy: val_metrics.as_ref().map(|m| m.accuracy),
        });
        history.stopped_epoch = epoch;

        if monitored < history.best_loss - MIN_DELTA {
            history.best_loss = monitored;
            history.best_epoch = epoch;
            best_model = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok((best_model, history))
}

/// Per-layer result of [`grad_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub index: usize,
    pub layer_type: String,
    pub n_params: usize,
    /// `None` for layers without parameters.
    pub max_relative_error: Option<f64>,
    /// Entries whose ±h probes straddled a ReLU kink and were not compared.
    pub kinks_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub layers: Vec<LayerCheck>,
    pub checked: usize,
    pub kinks_skipped: usize,
}

impl GradCheckReport {
    /// Worst error per layer type present in the model. Types without
    /// parameters map to `None`.
    pub fn by_layer_type(&self) -> BTreeMap<String, Option<f64>> {
        let mut out: BTreeMap<String, Option<f64>> = BTreeMap::new();
        for l in &self.layers {
            let entry = out.entry(l.layer_type.clone()).or_insert(None);
            if let Some(e) = l.max_relative_error {
                *entry = Some(entry.map_or(e, |cur: f64| cur.max(e)));
            }
        }
        out
    }
}

/// `|a − n| / max(|a|, |n|, 1e−8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backprop gradients against central differences for every
/// parameter. Dropout is disabled and batch norm uses batch statistics.
///
/// A parameter whose `+h` and `−h` probes land on different sides of a ReLU
/// kink has no meaningful finite difference; such entries are counted in
/// `kinks_skipped` instead of compared.
pub fn grad_check(
    model: &ModelGraph,
    x: &Matrix2D,
    labels: &[usize],
    h: f64,
) -> Result<GradCheckReport> {
    grad_check_with(model, x, labels, h, |_| {})
}

/// [`grad_check`] with a hook that may alter the analytic gradients before
/// comparison; used to confirm the checker notices a wrong gradient.
pub fn grad_check_with(
    model: &ModelGraph,
    x: &Matrix2D,
    labels: &[usize],
    h: f64,
    tamper: impl FnOnce(&mut Gradients),
) -> Result<GradCheckReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::arg(format!("step h must be > 0, got {h}")));
    }
    let count = model.param_count();
    if count > GRAD_CHECK_MAX_PARAMS {
        return Err(Error::Capacity {
            what: "gradient check parameter count".into(),
            required: count as u128,
            limit: GRAD_CHECK_MAX_PARAMS as u128,
        });
    }
    let mut m = model.without_dropout();
    // dropout is off, so the generator is never drawn from
    let mut rng = Rng::new(0);
    let (_, mut analytic) = m.loss_and_gradients(x, labels, &mut rng)?;
    tamper(&mut analytic);

    let mut probe = |m: &mut ModelGraph| -> Result<(f64, Vec<bool>)> {
        let (_, cache) = m.forward(x, Mode::Train, &mut rng)?;
        let loss = softmax_cross_entropy(cache.logits(), labels)?.loss;
        Ok((loss, m.relu_pattern(&cache)))
    };

    let block_sizes: Vec<usize> = m.params().iter().map(|p| p.values.len()).collect();
    let mut block_errors = vec![0.0f64; block_sizes.len()];
    let mut block_kinks = vec![0usize; block_sizes.len()];
    for (b, &size) in block_sizes.iter().enumerate() {
        for j in 0..size {
            let original = m.params_mut()[b].1[j];
            m.params_mut()[b].1[j] = original + h;
            let (plus, plus_pattern) = probe(&mut m)?;
            m.params_mut()[b].1[j] = original - h;
            let (minus, minus_pattern) = probe(&mut m)?;
            m.params_mut()[b].1[j] = original;
            if plus_pattern != minus_pattern {
                block_kinks[b] += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.blocks()[b].as_slice()[j];
            block_errors[b] = block_errors[b].max(relative_error(a, numeric));
        }
    }

    let mut layers = Vec::new();
    let mut cursor = 0;
    for (index, layer) in model.layers().iter().enumerate() {
        let n_blocks = layer.params().len();
        let err = block_errors[cursor..cursor + n_blocks]
            .iter()
            .copied()
            .reduce(f64::max);
        let kinks = block_kinks[cursor..cursor + n_blocks].iter().sum();
        cursor += n_blocks;
        layers.push(LayerCheck {
            index,
            layer_type: layer.type_name().to_string(),
            n_params: layer.param_count(),
            max_relative_error: err,
            kinks_skipped: kinks,
        });
    }
    let kinks_skipped: usize = block_kinks.iter().sum();
    let max_relative_error = block_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        layers,
        checked: count - kinks_skipped,
        kinks_skipped,
    })
}
