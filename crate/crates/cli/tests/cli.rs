use std::path::Path;
use std::process::{Command, Output};

fn svlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svlab")).args(args).output().expect("spawn svlab")
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("s.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL: &str = "name = \"small\"\npolynomial = \"x1*x2 - x3*x4\"\ndeltas = [0.25, 0.125, 0.0625]\n\
experiments = [\"directions\", \"kakeya\"]\nseed = 5\n";

#[test]
fn run_writes_all_outputs_and_fit_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = svlab(&["run", "--scenario", &scen, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "directions.csv", "decomposition.csv", "kakeya.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 3);
    assert_eq!(report["scenario"]["seed"], 5);

    let csv = out.join("directions.csv");
    let o = svlab(&["fit", "--in", csv.to_str().unwrap(), "--x", "delta", "--y", "e_delta_dir"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let slope = fit["slope"].as_f64().unwrap();
    assert!(slope.is_finite() && slope > 0.0, "slope {slope}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "0")] {
        let o = svlab(&["run", "--scenario", &scen, "--out", out.to_str().unwrap(), "--delta", "0.25,0.125", "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "directions.csv", "kakeya.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), SMALL);
    let out = dir.path().join("o");
    let o = svlab(&["run", "--scenario", &scen, "--out", out.to_str().unwrap(), "--delta", "0.25", "--seed", "77"]);
    assert!(o.status.success());
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 77"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), "name = \"t\"\ndeltas = [0.25]\npolynomial = \"x1 + * x2\"\nexperiments = []\n");
    let o = svlab(&["run", "--scenario", &scen, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unordered_deltas_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), SMALL);
    let o = svlab(&["run", "--scenario", &scen, "--out", dir.path().join("o").to_str().unwrap(), "--delta", "0.125,0.25"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid argument"));
}

#[test]
fn unknown_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = svlab(&["run", "--scenario", "no-such-thing", "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn fit_needs_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    std::fs::write(&csv, "delta,e_delta_dir\n0.5,2\n0.25,8\n").unwrap();
    let o = svlab(&["fit", "--in", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&csv, "delta,e_delta_dir\n0.5,2\n0.25,8\n0.125,32\n").unwrap();
    let o = svlab(&["fit", "--in", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let fit: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((fit["slope"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}
