//! End-to-end pipeline: optional feature combination, z-scoring fitted on the
//! training split, model training, and checkpoint files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{zscore_apply, zscore_apply_matrix, zscore_fit, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::featcomb::{enumerate_subsets, transform_with_subsets, CombinationSpec, SubsetIndex};
use crate::model::{LayerRecord, ModelConfig, ModelGraph, ModelKind};
use crate::ndcore::{Matrix2D, Rng, RNG_ALGORITHM};
use crate::train::{evaluate_matrix, fit, split_validation, Metrics, TrainConfig, TrainHistory};

/// A trained model together with the feature preprocessing it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub kind: ModelKind,
    pub config: ModelConfig,
    /// Present when inputs are expanded by the combination layer.
    pub combination: Option<CombinationSpec>,
    pub subsets: Vec<SubsetIndex>,
    pub norm_stats: NormStats,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub label_name: String,
    pub model: ModelGraph,
}

/// Result of [`Pipeline::fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub pipeline: Pipeline,
    pub history: TrainHistory,
    /// Validation metrics of the returned parameters, when a validation split exists.
    pub validation: Option<Metrics>,
}

impl Pipeline {
    /// Trains a model of `kind` on raw (uncombined, unnormalized) data.
    ///
    /// With `combine` set, rows are first expanded per `config.combination`.
    /// A validation split is taken per `train_cfg`, normalization statistics are
    /// fitted on the remaining training rows only, and the model is initialized
    /// from `config.seed`.
    pub fn fit(
        raw: &Dataset,
        kind: ModelKind,
        config: &ModelConfig,
        train_cfg: &TrainConfig,
        combine: bool,
    ) -> Result<FitOutcome> {
        config.validate()?;
        train_cfg.validate()?;
        let (combination, subsets, expanded) = if combine {
            let spec = config.combination;
            spec.validate(raw.n_features())?;
            let subsets = enumerate_subsets(raw.n_features(), spec.m, spec.max_combined)?;
            let combined = transform_with_subsets(&raw.features, &spec, subsets.clone())?;
            let names = combined.column_names(&raw.feature_names);
            (
                Some(spec),
                subsets,
                raw.with_features(combined.values, names)?,
            )
        } else {
            (None, Vec::new(), raw.clone())
        };

        let (train, val) = split_validation(&expanded, train_cfg)?;
        let stats = zscore_fit(&train);
        let train = zscore_apply(&train, &stats)?;
        let val = val.map(|v| zscore_apply(&v, &stats)).transpose()?;

        let mut rng = Rng::new(config.seed);
        let model = ModelGraph::build(kind, train.n_features(), raw.n_classes(), config, &mut rng)?;
        let (model, history) = fit(model, &train, val.as_ref(), train_cfg)?;
        let validation = val
            .as_ref()
            .map(|v| evaluate_matrix(&model, &v.features, &v.labels))
            .transpose()?;

        Ok(FitOutcome {
            pipeline: Pipeline {
                kind,
                config: config.clone(),
                combination,
                subsets,
                norm_stats: stats,
                feature_names: raw.feature_names.clone(),
                class_names: raw.class_names.clone(),
                label_name: raw.label_name.clone(),
                model,
            },
            history,
            validation,
        })
    }

    /// Raw feature matrix (columns in `feature_names` order) to model input.
    pub fn prepare(&self, raw: &Matrix2D) -> Result<Matrix2D> {
        if raw.cols() != self.feature_names.len() {
            return Err(Error::shape(format!(
                "pipeline expects {} raw features, got {}",
                self.feature_names.len(),
                raw.cols()
            )));
        }
        let expanded = match &self.combination {
            Some(spec) => transform_with_subsets(raw, spec, self.subsets.clone())?.values,
            None => raw.clone(),
        };
        zscore_apply_matrix(&expanded, &self.norm_stats)
    }

    /// Reorders `ds`'s columns by name and re-encodes its labels against the
    /// pipeline's class names.
    pub fn align(&self, ds: &Dataset) -> Result<(Matrix2D, Vec<usize>)> {
        let missing: Vec<&str> = self
            .feature_names
            .iter()
            .filter(|n| !ds.feature_names.contains(n))
            .map(String::as_str)
            .collect();
        let extra: Vec<&str> = ds
            .feature_names
            .iter()
            .filter(|n| !self.feature_names.contains(n))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::Schema(format!(
                "feature columns differ from the checkpoint: missing {missing:?}, extra {extra:?}"
            )));
        }
        let positions: Vec<usize> = self
            .feature_names
            .iter()
            .map(|n| {
                ds.feature_names
                    .iter()
                    .position(|f| f == n)
                    .expect("checked above")
            })
            .collect();
        let mut data = Vec::with_capacity(ds.n_samples() * positions.len());
        for row in ds.features.iter_rows() {
            data.extend(positions.iter().map(|&p| row[p]));
        }
        let features = Matrix2D::new(ds.n_samples(), positions.len(), data)?;

        let mut labels = Vec::with_capacity(ds.labels.len());
        for &l in &ds.labels {
            let name = &ds.class_names[l];
            let code = self
                .class_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| {
                    Error::Schema(format!(
                        "label {name:?} is not a class known to the checkpoint"
                    ))
                })?;
            labels.push(code);
        }
        Ok((features, labels))
    }

    /// Metrics on a raw dataset whose columns are matched by name.
    pub fn evaluate(&self, ds: &Dataset) -> Result<Metrics> {
        let (raw, labels) = self.align(ds)?;
        evaluate_matrix(&self.model, &self.prepare(&raw)?, &labels)
    }

    /// Predicted class indices for raw rows in `feature_names` order.
    pub fn predict(&self, raw: &Matrix2D) -> Result<Vec<usize>> {
        self.model.predict(&self.prepare(raw)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: self.kind,
            config: self.config.clone(),
            combination: self.combination,
            subsets: self.subsets.clone(),
            normalization_stats: self.norm_stats.clone(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            label_name: self.label_name.clone(),
            input_dim: self.model.input_dim(),
            n_classes: self.model.n_classes(),
            layers: self.model.to_records(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: self.config.seed,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = ModelGraph::from_records(ck.kind, ck.input_dim, ck.n_classes, &ck.layers)?;
        let n = ck.feature_names.len();
        if let Some(spec) = &ck.combination {
            spec.validate(n)?;
            for s in &ck.subsets {
                SubsetIndex::new(s.indices().to_vec(), n)?;
                if s.len() != spec.m {
                    return Err(Error::Schema(format!(
                        "subset {:?} does not have size m = {}",
                        s.indices(),
                        spec.m
                    )));
                }
            }
        }
        let expanded = match &ck.combination {
            Some(spec) => {
                let mut w = ck.subsets.len();
                if spec.augment_original {
                    w += n;
                }
                if spec.append_global_interaction {
                    w += 1;
                }
                w
            }
            None => n,
        };
        if expanded != ck.input_dim
            || ck.normalization_stats.mean.len() != expanded
            || ck.normalization_stats.std.len() != expanded
        {
            return Err(Error::Schema(format!(
                "checkpoint widths disagree: model input {}, expanded features {expanded}, normalization {}",
                ck.input_dim,
                ck.normalization_stats.mean.len()
            )));
        }
        if ck.normalization_stats.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Schema(
                "normalization std entries must be > 0".into(),
            ));
        }
        if ck.class_names.len() != ck.n_classes {
            return Err(Error::Schema(format!(
                "{} class names for {} classes",
                ck.class_names.len(),
                ck.n_classes
            )));
        }
        Ok(Self {
            kind: ck.kind,
            config: ck.config.clone(),
            combination: ck.combination,
            subsets: ck.subsets.clone(),
            norm_stats: ck.normalization_stats.clone(),
            feature_names: ck.feature_names.clone(),
            class_names: ck.class_names.clone(),
            label_name: ck.label_name.clone(),
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// On-disk checkpoint document. Floats are written in shortest round-trip
/// decimal form, so a save/load cycle reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub combination: Option<CombinationSpec>,
    pub subsets: Vec<SubsetIndex>,
    pub normalization_stats: NormStats,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub label_name: String,
    pub input_dim: usize,
    pub n_classes: usize,
    pub layers: Vec<LayerRecord>,
    pub rng_algorithm: String,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
