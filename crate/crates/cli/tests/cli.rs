//! CLI smoke tests: the subcommand sequence on a synthetic fixture, exit
//! codes, and resume behavior.

use std::path::{Path, PathBuf};
use std::process::Command;

use ratebench_core::synthetic::{generate, write_to_dir, SyntheticConfig};

fn write_fixture(dir: &Path, method: &str) -> PathBuf {
    let dataset = generate(&SyntheticConfig {
        companies: 6,
        sectors: 2,
        ..Default::default()
    });
    write_to_dir(&dataset, dir).unwrap();
    let config = format!(
        r#"[data]
universe = "universe.toml"
prices = "prices.csv"
news = "news.jsonl"
analyst_ratings = "analyst.csv"
fundamentals = "fundamentals.csv"

[experiment]
method = "{method}"
start_month = "2023-01"
end_month = "2023-03"
seed = 5
output_dir = "out"

[gateway]
backend = "mock"
concurrency = 2
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn ratebench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ratebench"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn pipeline_subcommands_run_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), "sentiment");
    let config = config.to_str().unwrap();

    for subcommand in [
        "ingest",
        "summarize",
        "score-sentiment",
        "predict",
        "evaluate",
        "report",
    ] {
        let output = ratebench(&[subcommand, "--config", config]);
        assert!(
            output.status.success(),
            "{subcommand} failed:\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        );
    }

    let out = dir.path().join("out");
    for artifact in [
        "ingest-report.json",
        "summaries.jsonl",
        "sentiment.jsonl",
        "predictions.jsonl",
        "manifest.json",
        "transcripts.jsonl",
        "evaluation.json",
        "report/report.json",
        "report/monthly_mae.csv",
        "report/rating_distribution.csv",
        "report/correlations.csv",
    ] {
        assert!(out.join(artifact).is_file(), "missing {artifact}");
    }

    // The manifest reflects the 6 x 3 grid.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["planned_cells"], 18);
    assert_eq!(manifest["completed_ok"], 18);
    assert_eq!(manifest["expected_ratings"], 90);

    // Rerunning predict resumes without new gateway calls.
    let output = ratebench(&["predict", "--config", config]);
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("manifest on stdout");
    assert_eq!(manifest["resumed_cells"], 18);
    assert_eq!(manifest["gateway_calls"], 0);
}

#[test]
fn quarantined_rows_exit_partial() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), "vanilla");
    let analyst = dir.path().join("analyst.csv");
    let mut text = std::fs::read_to_string(&analyst).unwrap();
    text.push_str("Typo House,C01,2023-02-03,maintain,Overwight\n");
    std::fs::write(&analyst, text).unwrap();

    let output = ratebench(&["ingest", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1), "expected partial exit");
}

#[test]
fn fatal_errors_exit_two() {
    let output = ratebench(&["predict", "--config", "/nonexistent/config.toml"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));
}

#[test]
fn overrides_change_output_dir_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), "vanilla");
    let alt_out = dir.path().join("alt-out");
    let output = ratebench(&[
        "predict",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        alt_out.to_str().unwrap(),
        "--method",
        "fundamentals",
    ]);
    assert!(output.status.success());
    assert!(alt_out.join("predictions.jsonl").is_file());
    let manifest: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(manifest["method"], "fundamentals");
}
