use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robust_mom::harness::{parse_csv, read_summary, CSV_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robust-mom"))
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn config_path(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "configs", name]
        .iter()
        .collect()
}

fn small_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(config_path("mean_gaussian.json"))
        .unwrap()
        .replace("\"n_trials\": 500", "\"n_trials\": 12");
    let path = dir.join("small.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn bounds_prints_mean_bound() {
    let out = bin()
        .args([
            "bounds",
            "--experiment",
            "mean",
            "--r",
            "1",
            "--k",
            "100",
            "--n",
            "10000",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "0.8");
}

#[test]
fn bounds_without_dim_for_tukey_is_config_error() {
    let out = bin()
        .args([
            "bounds",
            "--experiment",
            "tukey",
            "--r",
            "1",
            "--k",
            "64",
            "--n",
            "2000",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn depth_1d_five_points() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("points.csv");
    std::fs::write(&points, "1\n2\n3\n4\n5\n").unwrap();
    let out = bin()
        .args(["depth", "--method", "1d", "--eta", "3", "--points"])
        .arg(&points)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["depth"], 3);
}

#[test]
fn depth_exact_2d_square() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("square.csv");
    std::fs::write(&points, "x,y\n0,0\n1,0\n0,1\n1,1\n").unwrap();
    let out = bin()
        .args(["depth", "--eta", "0.5,0.5", "--points"])
        .arg(&points)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["depth"], 2);
}

#[test]
fn estimate_prints_json_vector() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let rows: String = (0..40)
        .map(|i| format!("{},{}\n", 1.0 + (i % 2) as f64, -2.0))
        .collect();
    std::fs::write(&data, rows).unwrap();
    for name in [
        "lm_mom",
        "coordwise_mom",
        "geomedian_mom",
        "tukey_mom",
        "empirical_mean",
    ] {
        let out = bin()
            .args(["estimate", "--estimator", name, "--blocks", "4", "--data"])
            .arg(&data)
            .output()
            .unwrap();
        assert!(out.status.success(), "{name}");
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        let est: Vec<f64> = serde_json::from_value(v["estimate"].clone()).unwrap();
        assert_eq!(est.len(), 2);
        assert!(
            (est[0] - 1.5).abs() < 0.51 && (est[1] + 2.0).abs() < 0.01,
            "{name}: {est:?}"
        );
    }
    let out = bin()
        .args([
            "estimate",
            "--estimator",
            "cov_mom",
            "--blocks",
            "4",
            "--data",
        ])
        .arg(&data)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["estimate"].as_array().unwrap().len(), 2);
    let out = bin()
        .args([
            "estimate",
            "--estimator",
            "median",
            "--blocks",
            "4",
            "--data",
        ])
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_missing_config_exits_two() {
    let out = bin()
        .args(["run", "--config", "missing.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn unknown_flag_exits_two_with_usage() {
    let out = bin().args(["run", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn run_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("out{threads}"));
        let out = bin()
            .env("ROBUST_MOM_THREADS", threads)
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(out_dir);
    }
    let a = std::fs::read(outputs[0].join("trials.csv")).unwrap();
    let b = std::fs::read(outputs[1].join("trials.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    let records = parse_csv(&text).unwrap();
    assert_eq!(records.len(), 12 * 4);
    assert!(records
        .iter()
        .all(|r| r.within_bound == (r.error <= r.bound)));
    assert!(records.windows(2).all(|w| w[0].trial_id <= w[1].trial_id));

    let summary = read_summary(&outputs[0].join("summary.json")).unwrap();
    assert_eq!(summary.seed, 3);
    assert_eq!(summary.n_blocks, 64);
    assert_eq!(
        std::fs::read(outputs[0].join("summary.json")).unwrap(),
        std::fs::read(outputs[1].join("summary.json")).unwrap()
    );

    let out_dir = dir.path().join("reseeded");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .args(["--seed", "99"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        read_summary(&out_dir.join("summary.json")).unwrap().seed,
        99
    );
    assert_ne!(
        std::fs::read(out_dir.join("trials.csv")).unwrap(),
        std::fs::read(outputs[0].join("trials.csv")).unwrap()
    );
}

#[test]
fn every_shipped_config_parses() {
    for entry in std::fs::read_dir(config_path("")).unwrap() {
        let path = entry.unwrap().path();
        robust_mom::harness::ExperimentConfig::load(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
