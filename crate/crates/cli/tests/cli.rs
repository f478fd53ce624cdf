use std::path::PathBuf;
use std::process::{Command, Output};

fn hshadow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hshadow")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = hshadow(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

const SMALL: &[&str] = &["--copies", "64,128,256", "--reps", "3", "--L", "2,3", "--seed", "5"];

#[test]
fn moments_are_reproducible_across_runs_and_workers() {
    let base = [&["moments"], SMALL].concat();
    let a = stdout(&[base.as_slice(), &["--jobs", "1"]].concat());
    let b = stdout(&[base.as_slice(), &["--jobs", "1"]].concat());
    let c = stdout(&[base.as_slice(), &["--jobs", "4"]].concat());
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.starts_with("N,value,repetition,estimator,protocol,seed\n"));
    // 2 protocols × 2 degrees × 3 reps × 3 budgets
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 3 * 3);
    let other = stdout(&["moments", "--copies", "64,128,256", "--reps", "3", "--L", "2,3", "--seed", "6"]);
    assert_ne!(a, other);
}

#[test]
fn output_directory_files_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, jobs) in dirs.iter().zip(["1", "3"]) {
        let out = d.path().to_str().unwrap();
        stdout(&[&["distill", "--out", out, "--quiet", "--jobs", jobs], SMALL].concat());
    }
    for name in ["P2.csv", "VD2_X.csv", "P3.csv", "VD3_X.csv", "mse.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let manifest = std::fs::read_to_string(dirs[0].path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"config_sha256\""));
}

#[test]
fn metrology_is_reproducible() {
    let args = ["metrology", "--copies", "64,256", "--reps", "2", "--jobs", "2"];
    let a = stdout(&args);
    assert_eq!(a, stdout(&args));
    assert!(a.starts_with("N,theta_hat,delta,method,seed\n"));
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 4);
}

#[test]
fn characterize_published_table() {
    let path = data("table_s4.csv");
    let out = stdout(&["characterize", "--truth-table", path.to_str().unwrap()]);
    let fzzz: f64 = out.lines().find_map(|l| l.strip_prefix("table_f_zzz,")).unwrap().parse().unwrap();
    assert!((fzzz - 0.987).abs() <= 0.001, "{fzzz}");
    assert!(out.contains("measurements_passed,18.0"));

    let calibrated = stdout(&["characterize", "--target-fidelity", "0.935", "--format", "json"]);
    let pf: f64 = calibrated
        .lines()
        .find_map(|l| l.trim().strip_prefix("\"process_fidelity\": "))
        .map(|v| v.trim_end_matches(',').parse().unwrap())
        .unwrap();
    assert!((pf - 0.935).abs() < 1e-9, "{calibrated}");
}

#[test]
fn invalid_inputs_exit_nonzero() {
    for args in [
        &["moments", "--copies", "65", "--protocol", "hs"][..],
        &["moments", "--copies", "128,64"],
        &["moments", "--noise-p", "1.5"],
        &["moments", "--protocol", "xs"],
        &["distill", "--observable", "Q"],
        &["characterize", "--truth-table", "/nonexistent.csv"],
        &["moments", "--config", "/nonexistent.json"],
        &["moments", "--jobs", "0", "--copies", "64", "--reps", "1"],
    ] {
        let out = hshadow(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"protocol": "os", "l": [2], "copies": [100, 200], "repetitions": 2, "seed": 3}"#).unwrap();
    let out = stdout(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.lines().count(), 1 + 4);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",P2,os,3")));
    let overridden = stdout(&["sweep", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(overridden.lines().skip(1).all(|l| l.ends_with(",os,4")));
    std::fs::write(&cfg, r#"{"protocol": "os", "unknown_field": 1}"#).unwrap();
    assert!(!hshadow(&["sweep", "--config", cfg.to_str().unwrap()]).status.success());
}
