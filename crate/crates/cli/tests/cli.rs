use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tempfile::TempDir;

fn brenier(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brenier"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) {
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

fn gaussian_rows(n: usize, seed: u64, scale: [f64; 3]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            scale
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * z
                })
                .collect()
        })
        .collect()
}

fn csv_pair(dir: &TempDir) -> (PathBuf, PathBuf) {
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    write_csv(&x, &gaussian_rows(1000, 1, [1.0, 1.0, 1.0]));
    write_csv(&y, &gaussian_rows(1000, 2, [2.0, 1.0, 0.5]));
    (x, y)
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error report")
}

#[test]
fn fit_gaussian_on_csv_pair() {
    let dir = TempDir::new().unwrap();
    csv_pair(&dir);
    let out = brenier(
        &["fit-gaussian", "--source", "x.csv", "--target", "y.csv", "--out", "fit.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    let a = &v["monge_matrix"];
    for (i, expected) in [2.0, 1.0, 0.5].iter().enumerate() {
        let got = a[i][i].as_f64().unwrap();
        assert!((got - expected).abs() < 0.2, "A[{i}][{i}] = {got}");
    }
    assert_eq!(v["potential"]["kind"], "quadratic");
}

#[test]
fn header_flag_skips_first_row() {
    let dir = TempDir::new().unwrap();
    let (x, y) = csv_pair(&dir);
    for p in [&x, &y] {
        let body = std::fs::read_to_string(p).unwrap();
        std::fs::write(p, format!("c0,c1,c2\n{body}")).unwrap();
    }
    let args = ["fit-gaussian", "--source", "x.csv", "--target", "y.csv"];
    assert_eq!(brenier(&args, dir.path()).status.code(), Some(2));
    let mut with_header = args.to_vec();
    with_header.push("--header");
    assert_eq!(brenier(&with_header, dir.path()).status.code(), Some(0));
}

#[test]
fn select_without_candidates_is_usage_error() {
    let dir = TempDir::new().unwrap();
    csv_pair(&dir);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"source_csv": "x.csv", "target_csv": "y.csv", "candidates": []}"#,
    )
    .unwrap();
    let out = brenier(&["select", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("candidates"));
}

#[test]
fn non_convex_atom_is_usage_error() {
    let dir = TempDir::new().unwrap();
    csv_pair(&dir);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"source_csv": "x.csv", "target_csv": "y.csv",
            "dictionary": [{"kind": "quadratic", "matrix": [[1,0,0],[0,1,0],[0,0,-2]]}]}"#,
    )
    .unwrap();
    let out = brenier(&["fit-dictionary", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("convex"));
}

#[test]
fn singular_covariance_is_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let line: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    write_csv(&dir.path().join("x.csv"), &line);
    write_csv(&dir.path().join("y.csv"), &gaussian_rows(50, 3, [1.0, 1.0, 1.0]).iter().map(|r| r[..2].to_vec()).collect::<Vec<_>>());
    let out = brenier(&["fit-gaussian", "--source", "x.csv", "--target", "y.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["stage"], "fit");
    assert_eq!(err["error"]["class"], "numerical");
}

#[test]
fn unknown_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"oracle": {"tolerence": 1e-6}}"#).unwrap();
    let out = brenier(&["select", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerence"));
}

#[test]
fn missing_input_and_unwritable_output_are_io_errors() {
    let dir = TempDir::new().unwrap();
    let out = brenier(&["fit-gaussian", "--source", "a.csv", "--target", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    csv_pair(&dir);
    std::fs::create_dir(dir.path().join("taken")).unwrap();
    let out = brenier(
        &["fit-gaussian", "--source", "x.csv", "--target", "y.csv", "--out", "taken"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["stage"], "output");
}

#[test]
fn sweep_csv_header_and_json_round_trip() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"experiment": {"source": {"kind": "gaussian", "mean": [0, 0], "cov": [[1, 0], [0, 1]]},
                "truth": {"kind": "quadratic", "matrix": [[2, 0], [0, 1]]},
                "sample_sizes": [100, 200], "replicates": 2, "eval_points": 500},
            "estimator": "location_scale"}"#,
    )
    .unwrap();
    let out = brenier(&["sweep", "--config", "cfg.json", "--out", "t.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,replicate,estimator,map_error,map_error_se,excess,excess_se,wall_ms"
    );
    assert_eq!(lines.count(), 4);

    let out = brenier(&["sweep", "--config", "cfg.json", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 4);
    assert_eq!(v[3]["n"], 200);
}

#[test]
fn help_exits_cleanly() {
    let dir = TempDir::new().unwrap();
    assert_eq!(brenier(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(brenier(&["frobnicate"], dir.path()).status.code(), Some(2));
}
