use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zoll-lab")).args(args).arg("--out").arg(out).output().unwrap()
}

fn data(name: &str) -> String {
    format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn example_config_runs_and_reruns_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = data("detector_torus.ini");
    for d in [&a, &b] {
        let o = lab(&["--config", &cfg, "suite", "detector"], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    }
    for f in ["detector.json", "detector_sigma_histogram.csv"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert_eq!(x, y, "{f} differs between runs");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("detector.json")).unwrap()).unwrap();
    assert_eq!(json["suite"], "detector");
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn config_error_names_line_and_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.ini");
    std::fs::write(&cfg, "[model]\nkind = sphere\n\n[flow]\nstepp = 0.1\n").unwrap();
    let o = lab(&["--config", cfg.to_str().unwrap(), "suite", "detector"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("flow.stepp"), "{err}");
}

#[test]
fn failed_expectation_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(&["detect-zoll", "--spectrum", "torus", "--cutoff", "20", "--expect", "zoll-consistent"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(d.path().join("detect-zoll.json").exists());
}

#[test]
fn model_mismatch_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(&["--config", &data("detector_torus.ini"), "--model", "sphere", "suite", "detector"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn coherent_csv_columns() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(&["--model", "sphere", "coherent", "--k", "100", "--t-list", "0,pi/2"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("coherent.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,mass_in_tube"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn unknown_subcommand_value_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = lab(&["--model", "sphere", "suite", "everything"], d.path());
    assert_eq!(o.status.code(), Some(1));
}
