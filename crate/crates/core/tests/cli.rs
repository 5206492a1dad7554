use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commitlab")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("commitlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn lists_bundled_scenarios() {
    let out = bin(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("simple-attack")));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn run_json_report() {
    let out = bin(&["run", "simple-attack", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scenario"], "simple-attack");
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["verdict"] == "nash" || c["check"] == "matrix"));
}

#[test]
fn trace_is_jsonl() {
    let dir = std::env::temp_dir().join(format!("commitlab-cli-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("t.jsonl");
    let out = bin(&["run", "simple-attack", "--seed", "3", "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn malformed_json_exits_2() {
    let p = scratch("broken.json", "{ \"scenario\": ");
    assert_eq!(bin(&["run", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unknown_scenario_exits_2() {
    assert_eq!(bin(&["run", "no-such-scenario"]).status.code(), Some(2));
}

#[test]
fn unknown_key_exits_3() {
    let p = scratch("typo.json", r#"{"scenario": "x", "gmae": {}}"#);
    assert_eq!(bin(&["run", p.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn search_bound_exits_4() {
    assert_eq!(bin(&["run", "simple-attack", "--max-joint-actions", "2"]).status.code(), Some(4));
}

#[test]
fn overhead_subcommand() {
    let out = bin(&["overhead", "--n-agg", "16", "--n-limit", "8", "--format", "json"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("33216"));
}
