//! Run configuration: a flat JSON object whose absent keys take documented
//! defaults. Parsing is strict; every unknown or mistyped key is reported.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tcn_core::data::LabelColumn;
use tcn_core::{Approach, CombinationSpec, ModelConfig, ModelKind, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub output_dir: PathBuf,
    pub model: ModelKind,
    /// Whether to expand inputs with the combination layer. Defaults to true
    /// for `tcn` and false for the baselines.
    pub combine: Option<bool>,

    pub m: usize,
    pub approach: Approach,
    pub max_combined: u64,
    pub augment_original: bool,
    pub append_global_interaction: bool,

    pub hidden1: usize,
    pub hidden2: usize,
    pub n_residual_blocks: usize,
    pub dropout_rate: f64,
    pub use_batchnorm: bool,

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

    /// Rows of the batch used by `gradcheck`.
    pub gradcheck_samples: usize,
    pub gradcheck_step: f64,
    /// Shape of the random toy batch `gradcheck` uses when no dataset is set.
    pub toy_features: usize,
    pub toy_classes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let spec = CombinationSpec::default();
        let train = TrainConfig::default();
        Self {
            dataset: None,
            label_column: LabelColumn::Name("label".into()),
            has_header: true,
            output_dir: PathBuf::from("tcn-output"),
            model: ModelKind::Tcn,
            combine: None,
            m: spec.m,
            approach: spec.approach,
            max_combined: spec.max_combined,
            augment_original: spec.augment_original,
            append_global_interaction: spec.append_global_interaction,
            hidden1: model.hidden1,
            hidden2: model.hidden2,
            n_residual_blocks: model.n_residual_blocks,
            dropout_rate: model.dropout_rate,
            use_batchnorm: model.use_batchnorm,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            l2_lambda: train.l2_lambda,
            early_stop_patience: train.early_stop_patience,
            val_fraction: train.val_fraction,
            beta1: train.beta1,
            beta2: train.beta2,
            adam_epsilon: train.adam_epsilon,
            seed: train.seed,
            shuffle_each_epoch: train.shuffle_each_epoch,
            gradcheck_samples: 8,
            gradcheck_step: 1e-5,
            toy_features: 6,
            toy_classes: 3,
        }
    }
}

/// Names of every accepted key.
pub fn known_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

fn suggestion(key: &str, known: &[String]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), k))
        .filter(|(d, k)| *d <= 3.max(k.len() / 4))
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k.clone())
}

impl RunConfig {
    /// Parses a JSON document, reporting every unknown or mistyped key at once.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::usage(format!("config is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(CliError::usage("config must be a JSON object"));
        };
        let known = known_keys();
        let mut problems = Vec::new();
        for (key, v) in &map {
            if !known.contains(key) {
                match suggestion(key, &known) {
                    Some(s) => problems.push(format!("unknown key {key:?} (did you mean {s:?}?)")),
                    None => problems.push(format!("unknown key {key:?}")),
                }
                continue;
            }
            let mut single = Map::new();
            single.insert(key.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(single)) {
                problems.push(format!("key {key:?}: {e}"));
            }
        }
        if !problems.is_empty() {
            return Err(CliError::usage(format!(
                "invalid config:\n  {}",
                problems.join("\n  ")
            )));
        }
        serde_json::from_value(Value::Object(map))
            .map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    /// Reads a config file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &cfg.dataset {
            if d.is_relative() {
                cfg.dataset = Some(base.join(d));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn uses_combination(&self) -> bool {
        self.combine.unwrap_or(self.model.uses_combination())
    }

    pub fn combination_spec(&self) -> CombinationSpec {
        CombinationSpec {
            m: self.m,
            approach: self.approach,
            max_combined: self.max_combined,
            augment_original: self.augment_original,
            append_global_interaction: self.append_global_interaction,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            combination: self.combination_spec(),
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            n_residual_blocks: self.n_residual_blocks,
            dropout_rate: self.dropout_rate,
            use_batchnorm: self.use_batchnorm,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            l2_lambda: self.l2_lambda,
            early_stop_patience: self.early_stop_patience,
            val_fraction: self.val_fraction,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            seed: self.seed,
            shuffle_each_epoch: self.shuffle_each_epoch,
        }
    }

    /// Checks every nested configuration and lists all problems together.
    pub fn validate(&self) -> CliResult<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.model_config().validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.train_config().validate() {
            problems.push(e.to_string());
        }
        if self.m == 0 {
            problems.push("m must be >= 1".to_string());
        }
        if self.m == 1 && self.approach == Approach::PairwiseSum {
            problems.push("pairwise_sum needs m >= 2".to_string());
        }
        if self.gradcheck_samples == 0 {
            problems.push("gradcheck_samples must be >= 1".to_string());
        }
        if !(self.gradcheck_step > 0.0) {
            problems.push(format!(
                "gradcheck_step must be > 0, got {}",
                self.gradcheck_step
            ));
        }
        if self.toy_features == 0 || self.toy_classes < 2 {
            problems.push("toy_features must be >= 1 and toy_classes >= 2".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::usage(format!(
                "invalid config:\n  {}",
                problems.join("\n  ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_json(r#"{"dataset": "d.csv", "label_column": "y"}"#).unwrap();
        assert_eq!(cfg.label_column, LabelColumn::Name("y".into()));
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.model_config(), ModelConfig::default());
        assert!(cfg.uses_combination());
    }

    #[test]
    fn numeric_label_column() {
        let cfg = RunConfig::from_json(r#"{"label_column": 3}"#).unwrap();
        assert_eq!(cfg.label_column, LabelColumn::Index(3));
    }

    #[test]
    fn typo_gets_suggestion() {
        let err = RunConfig::from_json(r#"{"learning_rat": 0.1}"#).unwrap_err();
        assert!(err.message.contains("\"learning_rate\""), "{}", err.message);
    }

    #[test]
    fn every_offending_key_listed() {
        let err = RunConfig::from_json(
            r#"{"learning_rat": 0.1, "batch_size": "ten", "zzzzzzzzzzzzz": 1}"#,
        )
        .unwrap_err();
        for k in ["learning_rat", "batch_size", "zzzzzzzzzzzzz"] {
            assert!(err.message.contains(k), "{k} missing from {}", err.message);
        }
    }

    #[test]
    fn approach_aliases() {
        let cfg = RunConfig::from_json(r#"{"approach": "pairwise"}"#).unwrap();
        assert_eq!(cfg.approach, Approach::PairwiseSum);
    }

    #[test]
    fn semantic_problems_collected() {
        let cfg = RunConfig {
            learning_rate: -1.0,
            dropout_rate: 2.0,
            ..RunConfig::default()
        };
        let msg = cfg.validate().unwrap_err().message;
        assert!(
            msg.contains("learning_rate") && msg.contains("dropout_rate"),
            "{msg}"
        );
    }
}
