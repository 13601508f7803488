//! End-to-end tests of the `nltiso` binary: determinism, the
//! generate -> estimate pipeline identity, evaluation behaviors, config file
//! precedence, and error reporting on bad input.

use std::path::Path;
use std::process::{Command, Output};

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nltiso"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

/// Data rows of a CSV artifact, with the config preamble stripped.
fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn same_seed_gives_byte_identical_artifacts() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = run_cli(&[
            "experiment",
            "stationary",
            "--seed",
            "7",
            "--samples",
            "300",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_success(&out, "experiment");
    }
    assert_eq!(dir_contents(dir_a.path()), dir_contents(dir_b.path()));
}

#[test]
fn estimate_on_generated_series_reproduces_experiment() {
    let exp_dir = tempfile::tempdir().unwrap();
    let gen_dir = tempfile::tempdir().unwrap();
    let est_dir = tempfile::tempdir().unwrap();
    let common = ["--seed", "5", "--samples", "300"];

    let mut args = vec!["experiment", "stationary", "--method", "nltiso"];
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--out-dir", exp_dir.path().to_str().unwrap()]);
    assert_success(&run_cli(&args), "experiment");

    let mut args = vec!["generate", "stationary"];
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--out-dir", gen_dir.path().to_str().unwrap()]);
    assert_success(&run_cli(&args), "generate");

    // The generated series must match the experiment's series exactly.
    assert_eq!(
        data_lines(&exp_dir.path().join("series.csv")),
        data_lines(&gen_dir.path().join("series.csv"))
    );

    let series = gen_dir.path().join("series.csv");
    assert_success(
        &run_cli(&[
            "estimate",
            "--input",
            series.to_str().unwrap(),
            "--standardize",
            "false",
            "--method",
            "nltiso",
            "--out-dir",
            est_dir.path().to_str().unwrap(),
        ]),
        "estimate",
    );

    // File-based estimation reproduces the in-process run exactly.
    for artifact in [
        "ise_nltiso.csv",
        "predictions_nltiso.csv",
        "estimated_adjacency_nltiso.csv",
        "snapshots_nltiso.csv",
    ] {
        assert_eq!(
            data_lines(&exp_dir.path().join(artifact)),
            data_lines(&est_dir.path().join(artifact)),
            "{artifact} differs between in-process and file-based runs"
        );
    }
}

#[test]
fn malformed_csv_fails_with_position_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "T1,P1\n0.5,1.5\n0.25,not_a_number\n1.0,2.0\n").unwrap();
    let out = run_cli(&[
        "estimate",
        "--input",
        bad.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
    assert!(stderr.contains("P1"), "stderr: {stderr}");
}

#[test]
fn evaluate_against_itself_scores_perfect_precision() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(
        &run_cli(&[
            "experiment",
            "stationary",
            "--seed",
            "3",
            "--samples",
            "300",
            "--method",
            "nltiso",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]),
        "experiment",
    );
    let estimate = dir.path().join("estimated_adjacency_nltiso.csv");
    let out = run_cli(&[
        "evaluate",
        "--estimate",
        estimate.to_str().unwrap(),
        "--truth",
        estimate.to_str().unwrap(),
        "--truth-threshold",
        "1e-9",
    ]);
    assert_success(&out, "evaluate");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["support"]["precision"], serde_json::json!(1.0));
    assert_eq!(report["support"]["recall"], serde_json::json!(1.0));
}

#[test]
fn evaluate_rejects_mismatched_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let five = dir.path().join("five");
    let three = dir.path().join("three");
    for (nodes, out_dir) in [("5", &five), ("3", &three)] {
        assert_success(
            &run_cli(&[
                "generate",
                "stationary",
                "--seed",
                "1",
                "--samples",
                "50",
                "--nodes",
                nodes,
                "--out-dir",
                out_dir.to_str().unwrap(),
            ]),
            "generate",
        );
    }
    let out = run_cli(&[
        "evaluate",
        "--estimate",
        five.join("true_adjacency.csv").to_str().unwrap(),
        "--truth",
        three.join("truth.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mismatch"), "stderr: {stderr}");
}

#[test]
fn evaluate_matches_stored_support_metrics() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(
        &run_cli(&[
            "experiment",
            "stationary",
            "--seed",
            "3",
            "--samples",
            "300",
            "--method",
            "nltiso",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]),
        "experiment",
    );
    let out = run_cli(&[
        "evaluate",
        "--estimate",
        dir.path().join("estimated_adjacency_nltiso.csv").to_str().unwrap(),
        "--truth",
        dir.path().join("truth.json").to_str().unwrap(),
    ]);
    assert_success(&out, "evaluate");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stored: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("support_metrics_nltiso.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["support"], stored["metrics"]);
}

#[test]
fn config_file_applies_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "# tuning\nlambda = 0.5\nseed = 9\nsamples = 60\n").unwrap();
    let out_dir = dir.path().join("out");
    assert_success(
        &run_cli(&[
            "experiment",
            "stationary",
            "--config",
            config.to_str().unwrap(),
            "--lambda",
            "0.9",
            "--method",
            "nltiso",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]),
        "experiment",
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["lambda"], serde_json::json!(0.9));
    assert_eq!(summary["config"]["seed"], serde_json::json!(9));
    assert_eq!(summary["config"]["generator"]["n_samples"], serde_json::json!(60));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "lambada = 0.5\n").unwrap();
    let out = run_cli(&[
        "experiment",
        "stationary",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("lambada"), "stderr: {stderr}");
}

#[test]
fn timevarying_run_writes_trajectory_artifact() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(
        &run_cli(&[
            "experiment",
            "timevarying",
            "--seed",
            "2",
            "--samples",
            "200",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]),
        "experiment",
    );
    let trajectory = dir.path().join("adjacency_trajectory.csv");
    assert!(trajectory.exists());
    let lines = data_lines(&trajectory);
    // header + one row per generated sample
    assert_eq!(lines.len(), 1 + 200);
    let header = &lines[0];
    assert!(header.starts_with("t,"));
    assert_eq!(header.split(',').count(), 1 + 5 * 5 * 2);
}
