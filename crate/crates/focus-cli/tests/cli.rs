//! End-to-end tests of the `focus` binary: exit codes, error lines, log
//! formats, and the full artifact pipeline on a miniature configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use focus_core::envs::EnvSpec;

fn focus_bin() -> &'static str {
    env!("CARGO_BIN_EXE_focus")
}

fn run_in(root: &Path, args: &[&str]) -> Output {
    Command::new(focus_bin())
        .args(args)
        .env("FOCUS_RUN_ROOT", root)
        .output()
        .expect("spawn focus")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A drag-point config small enough for the whole pipeline to run in a few
/// seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "env": {
            "source": serde_json::to_value(EnvSpec::drag_point_source()).unwrap(),
            "target": serde_json::to_value(EnvSpec::drag_point_target()).unwrap(),
        },
        "nn": {"dynamics_hidden": [16], "mde_hidden": [16]},
        "train": {
            "source_transitions": 300,
            "episode_len": 25,
            "source_epochs": 8,
            "adapt_epochs": 2,
            "seeds": [0, 1],
        },
        "adapt": {
            "schedule": {"kind": "affine", "slope": 5.0, "offset": 3.0},
            "gamma": 4e-5,
        },
        "mde": {"resolution": 8, "epochs": 2},
        "planner": {"max_nodes": 60},
        "online": {
            "iterations": 1,
            "episodes_per_iteration": 1,
            "max_actions": 10,
            "max_replans": 2,
            "replan_threshold": 0.05,
            "start": [0.12, 0.5],
            "goal_center": [0.88, 0.5],
            "goal_radius": 0.05,
        },
        "eval": {"n_episodes": 2},
        "benchmark": {"train_size": 150, "val_size": 30, "episode_len": 15},
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!stderr_of(&out).is_empty(), "usage text goes to stderr");

    let out = run_in(dir.path(), &["no-such-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_3_with_category_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"env": {}, "surprise": 1}"#).unwrap();
    let out = run_in(dir.path(), &["collect-source", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_of(&out);
    let last = err.lines().last().unwrap_or("");
    assert!(
        last.starts_with("error: category=config"),
        "machine-parsable category line, got: {last}"
    );
}

#[test]
fn missing_run_dir_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let ghost = dir.path().join("nope");
    let out = run_in(dir.path(), &["eval", "--run", ghost.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("category=io"));
}

#[test]
fn json_logs_emit_one_object_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run_in(
        dir.path(),
        &["--json-logs", "collect-source", "--config", cfg.to_str().unwrap()],
    );
    assert_ok(&out);
    let err = stderr_of(&out);
    assert!(!err.trim().is_empty());
    for line in err.lines() {
        let obj: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(obj.get("ts").is_some_and(|v| v.is_number()));
        assert_eq!(obj.get("level").and_then(|v| v.as_str()), Some("info"));
        assert!(obj.get("event").is_some());
    }
}

#[test]
fn full_pipeline_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = tiny_config(root);
    let cfg_arg = cfg.to_str().unwrap();

    assert_ok(&run_in(root, &["collect-source", "--config", cfg_arg]));
    assert!(root.join("source/drag_point_s0/data.jsonl").is_file());

    assert_ok(&run_in(root, &["train-source", "--config", cfg_arg]));
    let source_ckpt = root.join("source/drag_point_s0/dynamics.ckpt");
    assert!(source_ckpt.is_file());
    assert!(root.join("source/drag_point_s0/train_report.csv").is_file());

    assert_ok(&run_in(root, &["make-benchmark", "--config", cfg_arg]));
    let bench_dir = root.join("benchmark/drag_point_s0");
    for name in ["train.jsonl", "validation.jsonl", "manifest.json"] {
        assert!(bench_dir.join(name).is_file(), "missing benchmark file {name}");
    }

    assert_ok(&run_in(root, &["adapt", "--config", cfg_arg, "--mode", "focus"]));
    assert!(root.join("adapt/drag_point_focus_s0/dynamics.ckpt").is_file());
    assert!(root.join("adapt/drag_point_focus_s0/train_report.csv").is_file());

    assert_ok(&run_in(root, &["validate", "--config", cfg_arg]));
    let validation_csv = root.join("validate/drag_point/validation.csv");
    assert!(validation_csv.is_file());
    let rows = std::fs::read_to_string(&validation_csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + 6, "header plus 2 seeds x 3 modes");
    assert!(root.join("validate/drag_point/validation_summary.csv").is_file());

    assert_ok(&run_in(root, &["online", "--config", cfg_arg, "--method", "focus"]));
    let run_dir = root.join("drag_point_focus_s0");
    assert!(run_dir.join("manifest.json").is_file());
    assert!(run_dir.join("iter_1/dynamics.ckpt").is_file());
    assert!(run_dir.join("iter_1/mde.ckpt").is_file());

    assert_ok(&run_in(root, &["eval", "--run", run_dir.to_str().unwrap()]));
    let metrics = run_dir.join("eval/metrics.csv");
    assert!(metrics.is_file());
    let metrics_body = std::fs::read_to_string(&metrics).unwrap();
    assert_eq!(metrics_body.lines().count(), 1 + 1, "header plus one iteration");

    let report_out = root.join("report");
    assert_ok(&run_in(
        root,
        &[
            "report",
            "--train-report",
            root.join("adapt/drag_point_focus_s0/train_report.csv").to_str().unwrap(),
            "--validation",
            validation_csv.to_str().unwrap(),
            "--run",
            run_dir.to_str().unwrap(),
            "--out",
            report_out.to_str().unwrap(),
        ],
    ));
    for name in ["weight_histogram.csv", "validation_summary.csv", "online_curves.csv"] {
        assert!(report_out.join(name).is_file(), "missing report file {name}");
    }

    let empty_report = run_in(root, &["report", "--out", report_out.to_str().unwrap()]);
    assert_eq!(empty_report.status.code(), Some(3), "report with no inputs is a config error");
}
