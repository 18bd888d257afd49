//! Drives the `tcn` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcn_core::data::{load_csv, synth_interaction, write_csv, InteractionRule, LabelColumn};
use tcn_core::featcomb::transform_dataset;
use tcn_core::train::Metrics;
use tcn_core::{CombinationSpec, Rng};

fn tcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcn"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_csv(dir: &Path, name: &str, n: usize) -> PathBuf {
    let ds = synth_interaction(n, 4, InteractionRule::ProductSign, 0.1, &mut Rng::new(5)).unwrap();
    let path = dir.join(name);
    write_csv(&ds, &path).unwrap();
    path
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn transform_headers_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "a,b,c,label\n1,2,3,x\n0.5,-1,4,y\n").unwrap();
    let output = dir.path().join("out.csv");
    let out = tcn(&[
        "transform",
        "--input",
        p(&input),
        "--output",
        p(&output),
        "--m",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&output).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "comb_0_1,comb_0_2,comb_1_2,label"
    );

    let original = load_csv(&input, &LabelColumn::Name("label".into()), true).unwrap();
    let reloaded = load_csv(&output, &LabelColumn::Name("label".into()), true).unwrap();
    let expected = transform_dataset(&original.features, &CombinationSpec::default())
        .unwrap()
        .values;
    for (a, b) in reloaded.features.as_slice().iter().zip(expected.as_slice()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    assert_eq!(reloaded.labels, original.labels);
    assert_eq!(reloaded.class_names, original.class_names);
}

#[test]
fn transform_pairwise_triples_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "1,2,3,4,k\n").unwrap();
    let out = tcn(&[
        "transform",
        "--input",
        p(&input),
        "--no-header",
        "--label-column",
        "4",
        "--m",
        "3",
        "--approach",
        "pairwise",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "comb_0_1_2,comb_0_1_3,comb_0_2_3,comb_1_2_3,4\n11,14,19,26,k\n"
    );
}

#[test]
fn transform_rejects_oversized_m() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "a,b,c,label\n1,2,3,x\n").unwrap();
    let out = tcn(&["transform", "--input", p(&input), "--m", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("m exceeds feature count"));
}

#[test]
fn exit_codes_by_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = tcn(&["transform", "--input", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,label\n1,2,a\nabc,3,b\n").unwrap();
    let out = tcn(&["transform", "--input", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 3") && msg.contains("x1"), "{msg}");

    let wide = dir.path().join("wide.csv");
    let header: Vec<String> = (0..40).map(|i| format!("f{i}")).collect();
    let row = vec!["1"; 40].join(",");
    std::fs::write(&wide, format!("{},label\n{row},a\n", header.join(","))).unwrap();
    let out = tcn(&["transform", "--input", p(&wide), "--m", "10"]);
    assert_eq!(out.status.code(), Some(3));

    assert_eq!(tcn(&["transform"]).status.code(), Some(1));
    assert_eq!(tcn(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tcn(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_minimal_config_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "train.csv", 200);
    let config = write_config(
        dir.path(),
        r#"{"dataset": "train.csv", "label_column": "label", "max_epochs": 5, "output_dir": "run"}"#,
    );
    let out = tcn(&["train", "--config", p(&config)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed: Metrics = serde_json::from_slice(&out.stdout).unwrap();

    let results: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/results.json")).unwrap(),
    )
    .unwrap();
    for key in [
        "config",
        "history",
        "final_metrics",
        "wall_time_seconds",
        "rng_algorithm",
    ] {
        assert!(results.get(key).is_some(), "{key} missing");
    }
    assert_eq!(results["config"]["learning_rate"], 0.001);
    assert_eq!(results["config"]["combine"], true);
    let validation: Metrics =
        serde_json::from_value(results["final_metrics"]["validation"].clone()).unwrap();
    assert_eq!(printed, validation);

    let eval = tcn(&[
        "eval",
        "--checkpoint",
        p(&dir.path().join("run/checkpoint.json")),
        "--input",
        p(&data),
    ]);
    assert!(
        eval.status.success(),
        "{}",
        String::from_utf8_lossy(&eval.stderr)
    );
    let evaluated: Metrics = serde_json::from_slice(&eval.stdout).unwrap();
    let train: Metrics = serde_json::from_value(results["final_metrics"]["train"].clone()).unwrap();
    assert_eq!(evaluated.confusion, train.confusion);
    assert!((evaluated.accuracy - train.accuracy).abs() < 1e-9);
    assert!((evaluated.mean_loss - train.mean_loss).abs() < 1e-9);
}

#[test]
fn eval_matches_columns_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "train.csv", 120);
    let out = tcn(&[
        "train",
        "--input",
        p(&data),
        "--output",
        p(&dir.path().join("run")),
        "--label-column",
        "label",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let checkpoint = dir.path().join("run/checkpoint.json");

    // reorder columns: label first, then x3, x1, x0, x2
    let text = std::fs::read_to_string(&data).unwrap();
    let order = [4, 3, 1, 0, 2];
    let permuted: String = text
        .lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            order
                .iter()
                .map(|&i| cells[i])
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    let permuted_path = dir.path().join("permuted.csv");
    std::fs::write(&permuted_path, permuted).unwrap();

    let a = tcn(&["eval", "--checkpoint", p(&checkpoint), "--input", p(&data)]);
    let b = tcn(&[
        "eval",
        "--checkpoint",
        p(&checkpoint),
        "--input",
        p(&permuted_path),
    ]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);

    let dropped: String = text
        .lines()
        .map(|l| l.split(',').skip(1).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let dropped_path = dir.path().join("dropped.csv");
    std::fs::write(&dropped_path, dropped).unwrap();
    let c = tcn(&[
        "eval",
        "--checkpoint",
        p(&checkpoint),
        "--input",
        p(&dropped_path),
    ]);
    assert_eq!(c.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&c.stderr).contains("x0"));
}

#[test]
fn config_errors_list_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"learning_rat": 0.01, "batch_sise": 5, "hidden1": "wide"}"#,
    );
    let out = tcn(&["train", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("did you mean \"learning_rate\""), "{msg}");
    assert!(
        msg.contains("batch_sise") && msg.contains("\"batch_size\""),
        "{msg}"
    );
    assert!(msg.contains("hidden1"), "{msg}");
    assert!(out.stdout.is_empty());

    let config = write_config(dir.path(), r#"{"learning_rate": -1, "val_fraction": 1.5}"#);
    let out = tcn(&["train", "--config", p(&config), "--input", "whatever.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("learning_rate") && msg.contains("val_fraction"),
        "{msg}"
    );
}

#[test]
fn gradcheck_reports_every_layer_type() {
    let out = tcn(&["gradcheck"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for t in ["dense", "residual", "batch_norm", "relu", "dropout"] {
        assert!(report["by_layer_type"].get(t).is_some(), "{t} missing");
    }
    assert!(report["max_relative_error"].as_f64().unwrap() < 1e-4);

    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"model": "cnn1d", "combine": false}"#);
    let out = tcn(&["gradcheck", "--config", p(&config)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["by_layer_type"].get("conv1d").is_some());
}

#[test]
fn gradcheck_detects_corrupt_gradient() {
    let out = tcn(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradient check failed"));
}

#[test]
fn gradcheck_refuses_large_models() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"hidden1": 100}"#);
    let out = tcn(&["gradcheck", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn approach_flag_reaches_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_csv(dir.path(), "d.csv", 100);
    let run = |approach: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = tcn(&[
            "train",
            "--input",
            p(&data),
            "--output",
            p(&out_dir),
            "--m",
            "3",
            "--approach",
            approach,
            "--seed",
            "4",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let ck: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_dir.join("checkpoint.json")).unwrap(),
        )
        .unwrap();
        ck
    };
    let mult = run("mult", "a");
    let pair = run("pairwise", "b");
    assert_eq!(mult["combination"]["approach"], "multiplicative");
    assert_eq!(pair["combination"]["approach"], "pairwise_sum");
    assert_eq!(mult["seed"], 4);
}
