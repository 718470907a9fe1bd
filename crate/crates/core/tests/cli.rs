use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use ma_lab::cli::{run, OUTPUT_ENV};

const BIN: &str = env!("CARGO_BIN_EXE_ma-lab");

fn ma_lab(args: &[&str], out: &Path) -> i32 {
    let mut argv = vec!["ma-lab", "--out", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(argv)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
    }
    files
}

#[test]
fn exponents_reports_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ma_lab(&["exponents", "--n", "2", "--eps", "0.1"], dir.path()), 0);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("exponents/summary.json")).unwrap()).unwrap();
    assert!((summary["results"]["limit"].as_f64().unwrap() - 2.4).abs() < 1e-12);
    assert_eq!(summary["config"]["eps"], 0.1);
    assert_eq!(summary["artifact"]["version"], env!("CARGO_PKG_VERSION"));
    let beta = std::fs::read_to_string(dir.path().join("exponents/beta.csv")).unwrap();
    assert!(beta.starts_with("k,delta_k,beta_k,beta_k_zero_schedule\n0,0,4,4\n"));
    assert_eq!(beta.lines().count(), 202);
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ma_lab(&["exponents", "--n", "1"], dir.path()), 2);
    assert_eq!(ma_lab(&["exponents", "--bogus", "1"], dir.path()), 2);
    assert_eq!(ma_lab(&["solve", "--grid-size", "7"], dir.path()), 2);
    assert_eq!(ma_lab(&["sharpness", "--B", "0.5", "--D", "1.0"], dir.path()), 2);
    assert_eq!(ma_lab(&["solve", "--background", "hyperbolic"], dir.path()), 2);
    assert_eq!(ma_lab(&["exponents", "--set-json", "{\"unknown\": 1}"], dir.path()), 2);
    assert_eq!(run(["ma-lab", "frobnicate"]), 2);
    // Nothing was computed, so no command directory holds results.
    assert!(!dir.path().join("exponents/summary.json").exists());
}

#[test]
fn unwritable_output_directory_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    assert_eq!(ma_lab(&["exponents"], &blocker.join("sub")), 2);
}

#[test]
fn non_convergence_exits_with_3_and_keeps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ma_lab(&["solve", "--grid-size", "8", "--max-sweeps", "3"], dir.path()), 3);
    let solve = dir.path().join("solve");
    assert!(solve.join("u.f64").exists());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(solve.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["diagnostics"]["converged"], false);
    assert_eq!(summary["results"]["diagnostics"]["sweeps"], 3);
}

#[test]
fn config_file_and_json_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# exponents\nn = 3\neps = 0.5\nk-max = 20\n").unwrap();
    let argv = ["ma-lab", "--out", dir.path().to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--set-json", r#"{"eps": 1.0}"#, "exponents"];
    assert_eq!(run(argv), 0);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("exponents/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["n"], 3);
    assert_eq!(summary["config"]["eps"], 1.0);
    assert_eq!(summary["config"]["k_max"], 20);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(BIN)
        .args(["exponents", "--k-max", "5"])
        .env(OUTPUT_ENV, dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(dir.path().join("exponents/beta.csv").exists());
    assert!(String::from_utf8_lossy(&status.stdout).contains("A = "));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(BIN).args(args).env(OUTPUT_ENV, dir.path()).output().unwrap().status.code();
    assert_eq!(code(&["exponents", "--n", "1"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["solve", "-N", "8", "--max-sweeps", "2"]), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["exponents", "--n", "3", "--eps", "0.01", "--chi", "2"],
        vec!["solve", "--grid-size", "8", "--seed", "42"],
        vec!["stability", "--grid-size", "8", "--seed", "3"],
    ] {
        assert_eq!(ma_lab(&args, dir.path()), 0, "{args:?}");
        let first = snapshot(&dir.path().join(args[0]));
        std::fs::remove_dir_all(dir.path().join(args[0])).unwrap();
        assert_eq!(ma_lab(&args, dir.path()), 0, "{args:?}");
        let second = snapshot(&dir.path().join(args[0]));
        assert!(!first.is_empty());
        assert_eq!(first, second, "{args:?}");
    }
}
