//! Network assembly: the feature-combination network and three baselines.
//!
//! A [`ModelGraph`] is an ordered list of [`Layer`]s ending in logits; the
//! softmax is applied by [`ModelGraph::infer`] and folded into the loss during
//! training. The feature-combination network expects its input to already be
//! the combined (and standardized) feature matrix; see [`crate::pipeline`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featcomb::CombinationSpec;
use crate::layers::{
    softmax, softmax_cross_entropy, Activation, BatchNormLayer, Conv1DLayer, DenseLayer,
    DropoutLayer, Layer, LayerCache, Mode, ParamKind, ParamView, ResidualBlock,
    DEFAULT_DROPOUT_RATE,
};
use crate::ndcore::{Matrix2D, Rng};

pub const CNN_KERNELS: usize = 8;
pub const CNN_KERNEL_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tcn,
    Mlp,
    Logistic,
    Cnn1d,
}

impl ModelKind {
    /// Whether inputs pass through the feature-combination layer first.
    pub fn uses_combination(self) -> bool {
        self == ModelKind::Tcn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub combination: CombinationSpec,
    pub hidden1: usize,
    pub hidden2: usize,
    pub n_residual_blocks: usize,
    pub dropout_rate: f64,
    pub use_batchnorm: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            combination: CombinationSpec::default(),
            hidden1: 20,
            hidden2: 10,
            n_residual_blocks: 1,
            dropout_rate: DEFAULT_DROPOUT_RATE,
            use_batchnorm: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::arg(format!(
                "hidden widths must be >= 1, got {} and {}",
                self.hidden1, self.hidden2
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::arg(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Gradient blocks aligned one-to-one with [`ModelGraph::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Matrix2D>);

impl Gradients {
    pub fn blocks(&self) -> &[Matrix2D] {
        &self.0
    }

    pub fn blocks_mut(&mut self) -> &mut [Matrix2D] {
        &mut self.0
    }
}

/// Everything `backward` needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    logits: Matrix2D,
    generation: u64,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix2D {
        &self.logits
    }
}

#[derive(Debug, Clone)]
pub struct ModelGraph {
    kind: ModelKind,
    input_dim: usize,
    n_classes: usize,
    layers: Vec<Layer>,
    /// Bumped whenever parameters are handed out mutably; stale caches are rejected.
    generation: u64,
}

/// Equality of architecture and parameters; the cache generation is ignored.
impl PartialEq for ModelGraph {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.input_dim == other.input_dim
            && self.n_classes == other.n_classes
            && self.layers == other.layers
    }
}

impl ModelGraph {
    /// Assembles a graph from explicit layers, checking that widths chain and
    /// that the last layer emits `n_classes` logits.
    pub fn from_layers(
        kind: ModelKind,
        input_dim: usize,
        n_classes: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::arg(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::arg("input dimension must be >= 1"));
        }
        let mut width = input_dim;
        for layer in &layers {
            width = layer.output_dim(width)?;
        }
        if width != n_classes {
            return Err(Error::shape(format!(
                "final layer width {width} differs from class count {n_classes}"
            )));
        }
        Ok(Self {
            kind,
            input_dim,
            n_classes,
            layers,
            generation: 0,
        })
    }

    /// Combined features → dense(hidden1, ReLU) → residual blocks → batch norm →
    /// ReLU → dropout → dense(hidden2, ReLU) → dense(n_classes).
    pub fn tcn(
        input_dim: usize,
        n_classes: usize,
        cfg: &ModelConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut layers = vec![Layer::Dense(DenseLayer::he(
            input_dim.max(1),
            cfg.hidden1,
            Activation::Relu,
            rng,
        )?)];
        for _ in 0..cfg.n_residual_blocks {
            layers.push(Layer::Residual(ResidualBlock::he(cfg.hidden1, rng)?));
        }
        Self::push_head(&mut layers, cfg, n_classes, rng)?;
        Self::from_layers(ModelKind::Tcn, input_dim, n_classes, layers)
    }

    fn push_head(
        layers: &mut Vec<Layer>,
        cfg: &ModelConfig,
        n_classes: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        if cfg.use_batchnorm {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(cfg.hidden1)));
        }
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout(DropoutLayer::new(cfg.dropout_rate)?));
        layers.push(Layer::Dense(DenseLayer::he(
            cfg.hidden1,
            cfg.hidden2,
            Activation::Relu,
            rng,
        )?));
        layers.push(Layer::Dense(DenseLayer::he(
            cfg.hidden2,
            n_classes.max(1),
            Activation::Identity,
            rng,
        )?));
        Ok(())
    }

    /// Builds any of the four model kinds. The combination spec in `cfg` is
    /// ignored by every kind; combination happens before the model.
    pub fn build(
        kind: ModelKind,
        input_dim: usize,
        n_classes: usize,
        cfg: &ModelConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::arg(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::arg("input dimension must be >= 1"));
        }
        match kind {
            ModelKind::Tcn => Self::tcn(input_dim, n_classes, cfg, rng),
            ModelKind::Logistic => {
                let layers = vec![Layer::Dense(DenseLayer::he(
                    input_dim,
                    n_classes,
                    Activation::Identity,
                    rng,
                )?)];
                Self::from_layers(kind, input_dim, n_classes, layers)
            }
            ModelKind::Mlp => {
                cfg.validate()?;
                let mut layers = vec![Layer::Dense(DenseLayer::he(
                    input_dim,
                    cfg.hidden1,
                    Activation::Relu,
                    rng,
                )?)];
                Self::push_head(&mut layers, cfg, n_classes, rng)?;
                Self::from_layers(kind, input_dim, n_classes, layers)
            }
            ModelKind::Cnn1d => {
                cfg.validate()?;
                if input_dim < CNN_KERNEL_WIDTH {
                    return Err(Error::arg(format!(
                        "cnn1d needs at least {CNN_KERNEL_WIDTH} input features, got {input_dim}"
                    )));
                }
                let conv = Conv1DLayer::he(CNN_KERNELS, CNN_KERNEL_WIDTH, 1, rng)?;
                let conv_out = conv.output_dim(input_dim)?;
                let layers = vec![
                    Layer::Conv1D(conv),
                    Layer::Relu,
                    Layer::Dense(DenseLayer::he(
                        conv_out,
                        cfg.hidden2,
                        Activation::Relu,
                        rng,
                    )?),
                    Layer::Dense(DenseLayer::he(
                        cfg.hidden2,
                        n_classes,
                        Activation::Identity,
                        rng,
                    )?),
                ];
                Self::from_layers(kind, input_dim, n_classes, layers)
            }
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access. Invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<ParamView<'_>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    /// Mutable parameter blocks in [`ModelGraph::params`] order. Invalidates
    /// outstanding forward caches.
    pub fn params_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        self.generation += 1;
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Layer type that owns each parameter block.
    pub fn param_owners(&self) -> Vec<&'static str> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.type_name(), l.params().len()))
            .collect()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients(
            self.params()
                .iter()
                .map(|p| Matrix2D::zeros(p.shape.0, p.shape.1))
                .collect(),
        )
    }

    fn check_input(&self, x: &Matrix2D) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "model expects {} input features, got batch of {}x{}",
                self.input_dim,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Forward pass returning class probabilities and a cache for
    /// [`ModelGraph::backward`]. Training mode draws dropout masks from `rng`
    /// and updates batch-norm running statistics.
    pub fn forward(
        &mut self,
        x: &Matrix2D,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Matrix2D, ForwardCache)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            let (out, cache) = layer.forward(&h, mode, rng)?;
            caches.push(cache);
            h = out;
        }
        let probs = softmax(&h);
        Ok((
            probs,
            ForwardCache {
                layers: caches,
                logits: h,
                generation: self.generation,
            },
        ))
    }

    pub fn logits(&self, x: &Matrix2D) -> Result<Matrix2D> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Inference-mode class probabilities. Deterministic and side-effect free.
    pub fn infer(&self, x: &Matrix2D) -> Result<Matrix2D> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Row-wise argmax of the inference probabilities.
    pub fn predict(&self, x: &Matrix2D) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.infer(x)?))
    }

    /// Sign pattern of every ReLU input recorded in `cache`. Two forward
    /// passes with equal patterns lie in the same linear region.
    pub fn relu_pattern(&self, cache: &ForwardCache) -> Vec<bool> {
        let mut out = Vec::new();
        for (layer, c) in self.layers.iter().zip(&cache.layers) {
            for m in layer.relu_inputs(c) {
                out.extend(m.as_slice().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// Gradient of the mean cross-entropy for every parameter block.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
        Ok(self.backward_with_input(cache, labels)?.0)
    }

    /// Like [`ModelGraph::backward`], also returning the gradient with respect
    /// to the model input.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
    ) -> Result<(Gradients, Matrix2D)> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(Error::State(
                "forward cache is stale: parameters changed after the forward pass".into(),
            ));
        }
        let ce = softmax_cross_entropy(&cache.logits, labels)?;
        let mut upstream = ce.grad_logits;
        let mut blocks: Vec<Vec<Matrix2D>> = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let (gx, grads) = layer.backward(lc, &upstream)?;
            blocks.push(grads);
            upstream = gx;
        }
        blocks.reverse();
        Ok((Gradients(blocks.into_iter().flatten().collect()), upstream))
    }

    /// Training-mode forward plus backward: returns the mean data loss and its
    /// gradients.
    pub fn loss_and_gradients(
        &mut self,
        x: &Matrix2D,
        labels: &[usize],
        rng: &mut Rng,
    ) -> Result<(f64, Gradients)> {
        let (_, cache) = self.forward(x, Mode::Train, rng)?;
        let loss = softmax_cross_entropy(&cache.logits, labels)?.loss;
        let grads = self.backward(&cache, labels)?;
        Ok((loss, grads))
    }

    /// Copy with every dropout rate set to zero.
    pub fn without_dropout(&self) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let Layer::Dropout(d) = layer {
                *d = DropoutLayer::new(0.0).expect("zero rate is valid");
            }
        }
        out
    }
}

/// Serialized form of one layer inside a checkpoint.
///
/// Every record carries `type`, `shape` and `values`; layers with more than
/// one tensor add named fields for the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerRecord {
    Dense {
        shape: [usize; 2],
        values: Vec<Vec<f64>>,
        bias: Vec<f64>,
        activation: Activation,
    },
    Residual {
        shape: [usize; 2],
        /// `[w1, w2]`.
        values: [Vec<Vec<f64>>; 2],
        /// `[b1, b2]`.
        biases: [Vec<f64>; 2],
        activation: Activation,
    },
    BatchNorm {
        shape: [usize; 1],
        /// `[gamma, beta, running_mean, running_var]`.
        values: [Vec<f64>; 4],
        momentum: f64,
        epsilon: f64,
    },
    Relu {
        shape: [usize; 0],
        values: [f64; 0],
    },
    Dropout {
        shape: [usize; 0],
        values: [f64; 0],
        rate: f64,
    },
    Conv1d {
        shape: [usize; 2],
        values: Vec<Vec<f64>>,
        bias: Vec<f64>,
        stride: usize,
    },
}

fn matrix_from_nested(rows: &[Vec<f64>], shape: [usize; 2]) -> Result<Matrix2D> {
    let m = if rows.is_empty() {
        Matrix2D::new(0, 0, Vec::new())?
    } else {
        Matrix2D::from_rows(rows)?
    };
    if m.shape() != (shape[0], shape[1]) {
        return Err(Error::Schema(format!(
            "declared shape {shape:?} but values are {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m)
}

impl LayerRecord {
    pub fn from_layer(layer: &Layer) -> Self {
        match layer {
            Layer::Dense(d) => LayerRecord::Dense {
                shape: [d.out_dim(), d.in_dim()],
                values: d.weights.to_nested(),
                bias: d.bias.clone(),
                activation: d.activation,
            },
            Layer::Residual(r) => LayerRecord::Residual {
                shape: [r.dim(), r.dim()],
                values: [r.w1.to_nested(), r.w2.to_nested()],
                biases: [r.b1.clone(), r.b2.clone()],
                activation: r.activation,
            },
            Layer::BatchNorm(b) => LayerRecord::BatchNorm {
                shape: [b.dim()],
                values: [
                    b.gamma.clone(),
                    b.beta.clone(),
                    b.running_mean.clone(),
                    b.running_var.clone(),
                ],
                momentum: b.momentum,
                epsilon: b.epsilon,
            },
            Layer::Relu => LayerRecord::Relu {
                shape: [],
                values: [],
            },
            Layer::Dropout(d) => LayerRecord::Dropout {
                shape: [],
                values: [],
                rate: d.rate(),
            },
            Layer::Conv1D(c) => LayerRecord::Conv1d {
                shape: [c.n_kernels(), c.width()],
                values: c.kernels.to_nested(),
                bias: c.bias.clone(),
                stride: c.stride,
            },
        }
    }

    pub fn to_layer(&self) -> Result<Layer> {
        Ok(match self {
            LayerRecord::Dense {
                shape,
                values,
                bias,
                activation,
            } => Layer::Dense(DenseLayer::new(
                matrix_from_nested(values, *shape)?,
                bias.clone(),
                *activation,
            )?),
            LayerRecord::Residual {
                shape,
                values,
                biases,
                activation,
            } => Layer::Residual(ResidualBlock::new(
                matrix_from_nested(&values[0], *shape)?,
                biases[0].clone(),
                matrix_from_nested(&values[1], *shape)?,
                biases[1].clone(),
                *activation,
            )?),
            LayerRecord::BatchNorm {
                shape,
                values,
                momentum,
                epsilon,
            } => {
                let d = shape[0];
                if values.iter().any(|v| v.len() != d) {
                    return Err(Error::Schema(format!(
                        "batch norm declared width {d} but has vectors of other lengths"
                    )));
                }
                if values[3].iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::Schema(
                        "batch norm running variance must be >= 0".into(),
                    ));
                }
                let [gamma, beta, running_mean, running_var] = values.clone();
                Layer::BatchNorm(BatchNormLayer {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum: *momentum,
                    epsilon: *epsilon,
                })
            }
            LayerRecord::Relu { .. } => Layer::Relu,
            LayerRecord::Dropout { rate, .. } => Layer::Dropout(DropoutLayer::new(*rate)?),
            LayerRecord::Conv1d {
                shape,
                values,
                bias,
                stride,
            } => Layer::Conv1D(Conv1DLayer::new(
                matrix_from_nested(values, *shape)?,
                bias.clone(),
                *stride,
            )?),
        })
    }
}

impl ModelGraph {
    pub fn to_records(&self) -> Vec<LayerRecord> {
        self.layers.iter().map(LayerRecord::from_layer).collect()
    }

    pub fn from_records(
        kind: ModelKind,
        input_dim: usize,
        n_classes: usize,
        records: &[LayerRecord],
    ) -> Result<Self> {
        let layers = records
            .iter()
            .map(LayerRecord::to_layer)
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(kind, input_dim, n_classes, layers)
    }
}

/// Index of each row's maximum; ties resolve to the lowest index.
pub fn argmax_rows(m: &Matrix2D) -> Vec<usize> {
    m.iter_rows()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
