use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bose"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn sweep_into(dir: &Path, jobs: &str) -> Output {
    bose(&[
        "--jobs",
        jobs,
        "sweep",
        "--algorithm",
        "thompson",
        "--env",
        "confounded_orthant",
        "--T",
        "300",
        "--d",
        "3",
        "--K",
        "3",
        "--replicates",
        "3",
        "--seed",
        "9",
        "--raw",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn sweep_outputs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(sweep_into(a.path(), "4").status.success());
    assert!(sweep_into(b.path(), "1").status.success());
    for name in [
        "trace_thompson_confounded_orthant.csv",
        "raw_thompson_confounded_orthant.csv",
        "summary.json",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"env": {"kind": "LINEAR_SPHERE", "d": 2, "K": 3},
            "algorithm": {"name": "oful"}, "T": 50, "replicates": 2, "sweep": [0.1, 1.0]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = bose(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--T",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(out.join("trace_oful_linear_sphere.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn run_uses_a_single_value() {
    let dir = tempfile::tempdir().unwrap();
    let res = bose(&[
        "run",
        "--algorithm",
        "epsgreedy",
        "--param",
        "0.2",
        "--T",
        "30",
        "--d",
        "2",
        "--K",
        "2",
        "--replicates",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["best"]["param_value"], 0.2);
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        bose(&["sweep", "--algorithm", "nope", "--out", out])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        bose(&["sweep", "--replicates", "0", "--out", out])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        bose(&["sweep", "--config", "/nonexistent/cfg.json", "--out", out])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        bose(&["lowerbound", "--algorithm", "bose", "--out", out])
            .status
            .code(),
        Some(5)
    );
    assert_eq!(
        bose(&["olsdemo", "--T", "3", "--out", out]).status.code(),
        Some(2)
    );
}

#[test]
fn lowerbound_reaches_half_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let res = bose(&[
        "lowerbound",
        "--T",
        "200",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("lowerbound.json")).unwrap())
            .unwrap();
    assert_eq!(report["holds"], true);
    assert!(report["min_over_params_of_max_regret"].as_f64().unwrap() >= 100.0);
}

#[test]
fn olsdemo_and_diagnose_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(bose(&["olsdemo", "--T", "2000", "--out", out])
        .status
        .success());
    let demo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("olsdemo.json")).unwrap())
            .unwrap();
    assert!(demo["bose_theta"][1].as_f64().unwrap() > 0.0);

    let res = bose(&[
        "diagnose", "--trials", "50", "--T", "100", "--d", "3", "--K", "3", "--out", out,
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for name in [
        "confidence.json",
        "self_normalized_symmetric.json",
        "self_normalized_general.json",
        "self_normalized_shifted.json",
        "freedman.json",
        "potential.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}
