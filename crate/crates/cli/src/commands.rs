use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tcn_core::data::{
    load_csv, to_csv_string, zscore_apply_matrix, zscore_fit_matrix, LabelColumn,
};
use tcn_core::featcomb::transform_dataset;
use tcn_core::pipeline::Checkpoint;
use tcn_core::train::{grad_check_with, GradCheckReport, Metrics, TrainHistory};
use tcn_core::{CombinationSpec, Matrix2D, ModelGraph, Pipeline, Rng, RNG_ALGORITHM};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Overall error above which `gradcheck` fails.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RESULTS_FILE: &str = "results.json";

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn print_stdout(text: &str) -> CliResult<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("cannot write to stdout: {e}")))
}

pub struct TransformArgs {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub spec: CombinationSpec,
}

/// Writes the combined-feature CSV (generated `comb_…` headers plus the
/// original label column).
pub fn transform(args: &TransformArgs) -> CliResult<()> {
    let ds = load_csv(&args.input, &args.label_column, args.has_header)?;
    let combined = transform_dataset(&ds.features, &args.spec)?;
    let names = combined.column_names(&ds.feature_names);
    let out = ds.with_features(combined.values, names)?;
    let text = to_csv_string(&out);
    match &args.output {
        Some(path) => write_file(path, &text),
        None => print_stdout(&text),
    }
}

#[derive(Debug, Serialize)]
pub struct FinalMetrics {
    /// Metrics of the returned model on the full dataset file.
    pub train: Metrics,
    pub validation: Option<Metrics>,
}

#[derive(Debug, Serialize)]
pub struct Results<'a> {
    pub config: &'a RunConfig,
    pub history: &'a TrainHistory,
    pub final_metrics: FinalMetrics,
    pub wall_time_seconds: f64,
    pub rng_algorithm: &'static str,
}

/// Trains per `cfg`, writes `checkpoint.json` and `results.json` into the
/// output directory, and prints the final metrics.
pub fn train(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    let started = Instant::now();
    let dataset = cfg.dataset.as_ref().ok_or_else(|| {
        CliError::usage("no dataset given (set \"dataset\" in the config or pass --input)")
    })?;
    let ds = load_csv(dataset, &cfg.label_column, cfg.has_header)?;
    let outcome = Pipeline::fit(
        &ds,
        cfg.model,
        &cfg.model_config(),
        &cfg.train_config(),
        cfg.uses_combination(),
    )?;
    let final_metrics = FinalMetrics {
        train: outcome.pipeline.evaluate(&ds)?,
        validation: outcome.validation,
    };

    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    let checkpoint = outcome.pipeline.to_checkpoint().to_json()?;
    write_file(&cfg.output_dir.join(CHECKPOINT_FILE), &checkpoint)?;

    let mut resolved = cfg.clone();
    resolved.combine = Some(cfg.uses_combination());
    let results = Results {
        config: &resolved,
        history: &outcome.history,
        final_metrics,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        rng_algorithm: RNG_ALGORITHM,
    };
    write_file(&cfg.output_dir.join(RESULTS_FILE), &to_json(&results)?)?;

    let shown = results
        .final_metrics
        .validation
        .as_ref()
        .unwrap_or(&results.final_metrics.train);
    print_stdout(&to_json(shown)?)
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub label_column: Option<LabelColumn>,
    pub has_header: bool,
}

/// Prints metrics of a saved pipeline on a CSV whose columns are matched by name.
pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.checkpoint)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", args.checkpoint.display())))?;
    let checkpoint = Checkpoint::from_json(&text).map_err(|e| {
        CliError::data(format!(
            "invalid checkpoint {}: {e}",
            args.checkpoint.display()
        ))
    })?;
    let pipeline = Pipeline::from_checkpoint(&checkpoint)?;
    let label = args
        .label_column
        .clone()
        .unwrap_or_else(|| LabelColumn::Name(pipeline.label_name.clone()));
    let ds = load_csv(&args.input, &label, args.has_header)?;
    let metrics = pipeline.evaluate(&ds)?;
    print_stdout(&to_json(&metrics)?)
}

#[derive(Debug, Serialize)]
struct GradcheckOutput<'a> {
    max_relative_error: f64,
    tolerance: f64,
    passed: bool,
    by_layer_type: std::collections::BTreeMap<String, Option<f64>>,
    checked: usize,
    kinks_skipped: usize,
    report: &'a GradCheckReport,
}

/// Builds the configured model on a small batch and compares backprop with
/// finite differences. Fails unless the worst error is below
/// [`GRADCHECK_TOLERANCE`]. `corrupt` perturbs one analytic gradient first.
pub fn gradcheck(cfg: &RunConfig, corrupt: bool) -> CliResult<()> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let (raw, labels, n_classes) = match &cfg.dataset {
        Some(path) => {
            let ds = load_csv(path, &cfg.label_column, cfg.has_header)?;
            let rows: Vec<usize> = (0..ds.n_samples().min(cfg.gradcheck_samples)).collect();
            let n_classes = ds.n_classes().max(2);
            (
                ds.features.select_rows(&rows),
                rows.iter().map(|&i| ds.labels[i]).collect(),
                n_classes,
            )
        }
        None => {
            let n = cfg.gradcheck_samples;
            let values = rng.normal(n * cfg.toy_features, 0.0, 1.0)?;
            let raw = Matrix2D::new(n, cfg.toy_features, values)?;
            let labels: Vec<usize> = (0..n).map(|i| i % cfg.toy_classes).collect();
            (raw, labels, cfg.toy_classes)
        }
    };
    let x = if cfg.uses_combination() {
        transform_dataset(&raw, &cfg.combination_spec())?.values
    } else {
        raw
    };
    let x = zscore_apply_matrix(&x, &zscore_fit_matrix(&x))?;
    let model = ModelGraph::build(
        cfg.model,
        x.cols(),
        n_classes,
        &cfg.model_config(),
        &mut rng,
    )?;
    let report = grad_check_with(&model, &x, &labels, cfg.gradcheck_step, |g| {
        if corrupt {
            if let Some(v) = g
                .blocks_mut()
                .first_mut()
                .and_then(|b| b.as_mut_slice().first_mut())
            {
                *v += 1.0;
            }
        }
    })?;
    let passed = report.max_relative_error < GRADCHECK_TOLERANCE;
    let output = GradcheckOutput {
        max_relative_error: report.max_relative_error,
        tolerance: GRADCHECK_TOLERANCE,
        passed,
        by_layer_type: report.by_layer_type(),
        checked: report.checked,
        kinks_skipped: report.kinks_skipped,
        report: &report,
    };
    print_stdout(&to_json(&output)?)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "gradient check failed: max relative error {:e} >= {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        )))
    }
}
