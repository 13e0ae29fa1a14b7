mod common;

use common::fixture;
use std::process::{Command, Output};

fn causalkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causalkit")).args(args).output().unwrap()
}

fn path(rel: &str) -> String {
    fixture(rel).to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dsep_prints_verdict() {
    let o = causalkit(&["dsep", "--graph", &path("graphs/collider.json"), "--x", "X", "--y", "W", "--given", "Z"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "d-separated: true");
}

#[test]
fn kidney_adjustment_text_and_json() {
    let args = ["estimate", "do", "--data", &path("data/kidney.csv"), "--x", "T=A", "--y", "R=1", "--adjust", "S"];
    let o = causalkit(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "P(R=1 | do(T=A)) = 0.833");
    let mut json_args = vec!["--out", "json"];
    json_args.extend(args);
    let v: serde_json::Value = serde_json::from_slice(&causalkit(&json_args).stdout).unwrap();
    let p = v["probability"].as_f64().unwrap();
    assert!((p - (81.0 / 87.0 * 357.0 / 700.0 + 192.0 / 263.0 * 343.0 / 700.0)).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(causalkit(&["discover", "pc", "--data", "nonexistent.csv"]).status.code(), Some(2));
    assert_eq!(causalkit(&["dsep", "--graph", &path("graphs/chain.json")]).status.code(), Some(2));
    assert_eq!(causalkit(&["--version"]).status.code(), Some(0));
    let o = causalkit(&["dsep", "--graph", &path("graphs/chain.json"), "--x", "X", "--y", "Nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("UnknownNode"));
}

#[test]
fn positivity_violation_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "Z,X,Y\n0,0,1\n0,1,0\n1,0,1\n").unwrap();
    let o = causalkit(&["estimate", "do", "--data", data.to_str().unwrap(), "--x", "X=1", "--y", "Y=1", "--adjust", "Z"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error: PositivityViolation"));
}

#[test]
fn randomized_commands_are_reproducible_and_need_a_seed() {
    let model = path("scm/sprinkler.json");
    assert_eq!(causalkit(&["scm", "sample", "--model", &model, "--n", "5"]).status.code(), Some(2));
    let a = causalkit(&["scm", "sample", "--model", &model, "--n", "50", "--seed", "9"]);
    let b = causalkit(&["scm", "sample", "--model", &model, "--n", "50", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().next().unwrap(), "Rain,Sprinkler,Wet");
}

#[test]
fn masking_leaves_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("xy.csv");
    let out = dir.path().join("masked.csv");
    let s = causalkit(&["scm", "sample", "--model", &path("scm/xy.json"), "--n", "500", "--seed", "1", "--output", data.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(0));
    let before = std::fs::read(&data).unwrap();
    let graph = path("mgraphs/mar.json");
    let o = causalkit(&[
        "missing", "mask", "--graph", &graph, "--data", data.to_str().unwrap(), "--cpts", &path("missing/mar_cpts.json"),
        "--seed", "2", "--output", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&data).unwrap(), before);
    let masked = std::fs::read_to_string(&out).unwrap();
    assert!(masked.starts_with("X,Y,R_y\n"));
    assert!(masked.contains(",NA,1"));
    let r = causalkit(&["--out", "json", "missing", "recover", "--graph", &graph, "--data", out.to_str().unwrap(), "--vars", "X,Y"]);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["status"], "recovered");
}

#[test]
fn bandit_sweep_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = causalkit(&[
        "--out", "json", "bandit", "sim", "--env", &path("bandit/five_arm.json"), "--policy", "greedy", "--horizon", "50",
        "--warm-start", "0:1", "--seed", "3", "--runs", "4", "--csv", trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["summary"]["runs"], 4);
    // a greedy player that saw one win on the worst machine never leaves it
    assert!((v["summary"]["mean_cumulative_regret"].as_f64().unwrap() - 50.0 * 0.4).abs() < 1e-9);
    let rows = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(rows.lines().count(), 51);
    let bad = causalkit(&["bandit", "sim", "--env", &path("bandit/two_arm.json"), "--policy", "causal-thompson", "--horizon", "5", "--seed", "1"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn discovery_dot_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("f.csv");
    causalkit(&["scm", "sample", "--model", &path("scm/collider_chain.json"), "--n", "10000", "--seed", "4", "--output", data.to_str().unwrap()]);
    let o = causalkit(&["discover", "pc", "--data", data.to_str().unwrap(), "--dot"]);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("\"Z\" -> \"W\";"));
}
