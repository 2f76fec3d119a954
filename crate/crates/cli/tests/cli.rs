// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{"name":"tiny-nsai","loop_count":1,"nodes":[
  {"id":"L1","kind":"layer","m":4,"n":8,"k":8,"precision":"INT8","deps":[]},
  {"id":"V1","kind":"vsa","n_vec":2,"d":8,"block":8,"op_kind":"bind","precision":"INT4","deps":["L1"]}]}"#;

const CYCLIC: &str = r#"{"name":"loop","loop_count":1,"nodes":[
  {"id":"a","kind":"layer","m":4,"n":8,"k":8,"precision":"INT8","deps":["b"]},
  {"id":"b","kind":"layer","m":4,"n":8,"k":8,"precision":"INT8","deps":["a"]}]}"#;

fn nsflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsflow")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.json");
    let cyclic = dir.path().join("cyclic.json");
    std::fs::write(&tiny, TINY).unwrap();
    std::fs::write(&cyclic, CYCLIC).unwrap();

    assert_eq!(nsflow(&["validate", path(&tiny)]).status.code(), Some(0));
    let out = nsflow(&["validate", path(&cyclic)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cycle"));
    let out = nsflow(&["validate", path(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn dse_then_simulate_tiny() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.json");
    let cfg = dir.path().join("config.json");
    std::fs::write(&tiny, TINY).unwrap();

    let out = nsflow(&["dse", path(&tiny), "--max-pes", "16", "--out", path(&cfg), "--freq-mhz", "272"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.contains("array,\"(2, 2, 4)\""), "{summary}");
    assert!(summary.contains("total_cycles,45"));
    assert!(summary.contains("total_ms,"));

    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&cfg).unwrap()).unwrap();
    assert_eq!(doc["array"], serde_json::json!({"H": 2, "W": 2, "N": 4}));
    assert_eq!(doc["per_node_mapping"]["sequential"], true);

    let out = nsflow(&["simulate", path(&tiny), "--config", path(&cfg), "--check-oracles", "--cases", "50"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("L1,layer,32,32,true,true"), "{report}");
    assert!(report.contains("V1,vsa,13,13,true,true"), "{report}");
    assert!(report.contains("0 mismatches"));

    let out = nsflow(&["--format", "json", "simulate", path(&tiny), "--config", path(&cfg)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 2);
}

#[test]
fn corrupted_config_is_rejected_before_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    let out = nsflow(&["dse", "builtin:tiny-nsai", "--max-pes", "16", "--out", path(&cfg)]);
    assert!(out.status.success());
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&cfg).unwrap()).unwrap();
    doc["per_node_mapping"]["N_l"][0] = serde_json::json!(0);
    std::fs::write(&cfg, serde_json::to_string(&doc).unwrap()).unwrap();

    let out = nsflow(&["simulate", "builtin:tiny-nsai", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("invalid mapping"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn no_prune_finds_the_same_tiny_optimum() {
    let a = nsflow(&["--format", "json", "dse", "builtin:tiny-nsai", "--max-pes", "16"]);
    let b = nsflow(&["--format", "json", "dse", "builtin:tiny-nsai", "--max-pes", "16", "--no-prune"]);
    let (a, b): (serde_json::Value, serde_json::Value) =
        (serde_json::from_slice(&a.stdout).unwrap(), serde_json::from_slice(&b.stdout).unwrap());
    assert_eq!(a["array"], b["array"]);
    assert_eq!(a["cycles"], b["cycles"]);
}

#[test]
fn graph_writes_dot() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    let out = nsflow(&["graph", "builtin:tiny-nsai", "--dot", path(&dot)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph \"tiny-nsai\""));
    assert!(text.contains("\"L1\" -> \"V1\""));
}

#[test]
fn ablation_rejects_out_of_range_ratio() {
    let out = nsflow(&["ablation", "--ratios", "0.2,1.5", "--max-pes", "64"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablation_small_sweep_csv() {
    let out = nsflow(&["ablation", "--ratios", "0.2,0.5", "--max-pes", "64"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("symbolic_share,t_baseline_seq,t_nsflow_phase1,t_nsflow_phase2,speedup_p1,speedup_p2,H,W,N,sequential")
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn bad_frequency_is_a_usage_error() {
    let out = nsflow(&["--freq-mhz", "0", "validate", "builtin:tiny-nsai"]);
    assert_eq!(out.status.code(), Some(1));
}
