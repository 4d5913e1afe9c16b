use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collar-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn slope_of(text: &str) -> f64 {
    let tail = text.split("slope = ").nth(1).expect("fit line");
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn geometry_prints_half_length() {
    let out = run(&["geometry", "--ell", "0.1", "--samples", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("X = 95.55"), "{text}");
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "s,rho");
    assert_eq!(rows.len(), 6);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["geometry"]).status.code(), Some(2));
    assert_eq!(run(&["geometry", "--ell", "3"]).status.code(), Some(2));
    assert_eq!(run(&["decompose", "/nonexistent.clmf", "--out", "/tmp/x.json"]).status.code(), Some(2));
}

#[test]
fn rates_on_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("q.csv");
    std::fs::write(&csv, "x,y\n0.5,0.25\n1,1\n2,4\n4,16\n").unwrap();
    let out = run(&["rates", csv.to_str().unwrap(), "--x", "x", "--column", "y"]);
    assert!(out.status.success());
    assert!((slope_of(&stdout(&out)) - 2.0).abs() < 1e-9);
}

#[test]
fn build_decompose_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("sweep.clmf");
    let dec = dir.path().join("dec.json");
    let lemmas = dir.path().join("lemmas.json");
    let config = configs().join("perturbed.toml");
    let build = run(&["build", "--config", config.to_str().unwrap(), "--out", field.to_str().unwrap(), "--ell", "0.1"]);
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));

    let out = run(&["decompose", field.to_str().unwrap(), "--out", dec.to_str().unwrap(), "--eps0", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dec).unwrap()).unwrap();
    assert_eq!(json["domain"], "collar");
    assert!(json["gaps"].as_array().is_some_and(|g| !g.is_empty()));

    let out = run(&["verify-lemmas", field.to_str().unwrap(), "--out", lemmas.to_str().unwrap(), "--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&lemmas).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
}

#[test]
fn sweep_then_rates() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("latitude.toml");
    let out = run(&["sweep", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--check", "--p", "1", "2", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("latitude.csv");
    assert!(dir.path().join("latitude.json").exists());

    let out = run(&["rates", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!((slope_of(&text) - 0.5).abs() <= 0.05, "{text}");
    assert!(text.contains("classification: non-geodesic"), "{text}");
}

#[test]
fn sweep_check_fails_on_wrong_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("torus-geodesic.toml")).unwrap();
    let wrong = text.replace("expected = \"finite-geodesic\"", "expected = \"non-geodesic\"");
    assert_ne!(text, wrong);
    let config = dir.path().join("wrong.toml");
    std::fs::write(&config, wrong).unwrap();
    let args = ["sweep", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    assert_eq!(run(&args).status.code(), Some(0));
    let mut checked = args.to_vec();
    checked.push("--check");
    assert_eq!(run(&checked).status.code(), Some(1));
}
