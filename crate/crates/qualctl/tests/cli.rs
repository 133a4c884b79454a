use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn qualctl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qualctl"))
}

fn run(args: &[&str]) -> Output {
    qualctl().args(args).output().expect("spawn qualctl")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn gen_and_clean(root: &Path, components: &str, quals: &str) {
    let gen = root.join("gen");
    let data = root.join("data");
    let out = run(&["--quiet", "gen", "--components", components, "--quals", quals, "--seed", "7", "--out", path(&gen)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "--quiet",
        "clean",
        "--plm",
        path(&gen.join("plm.csv")),
        "--qc",
        path(&gen.join("qc.csv")),
        "--llm",
        "mock",
        "--out",
        path(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_subcommand_has_help() {
    let flags: &[(&str, &[&str])] = &[
        ("gen", &["--components", "--quals", "--seed", "--out", "--profile"]),
        ("clean", &["--plm", "--qc", "--llm", "--out"]),
        ("query", &["--pn", "--k", "--json"]),
        ("rag", &["--plm", "--qc", "--truth", "--subset", "--k", "--llm", "--out"]),
        ("eval", &["--truth", "--out"]),
        ("cost", &["--max-n", "--step", "--csv", "--summary"]),
        ("serve", &["--port", "--data"]),
    ];
    for (cmd, wanted) in flags {
        let out = run(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in wanted.iter().chain(&["--json-errors", "--quiet", "--config"]) {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["gen"]).status.code(), Some(1));
    assert_eq!(run(&["gen", "--out", "x", "--bogus"]).status.code(), Some(1));
    let out = run(&["--json-errors", "frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "usage");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["cost", "--max-n", "10", "--step", "0", "--csv", path(&dir.path().join("c.csv"))]).status.code(), Some(1));
}

#[test]
fn gen_writes_four_files_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("d");
    let out = run(&["gen", "--components", "100", "--quals", "20", "--seed", "7", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty());
    for f in ["plm.csv", "qc.csv", "truth.json", "truth_rules.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let qc = std::fs::read_to_string(out_dir.join("qc.csv")).unwrap();
    assert_eq!(qc.lines().count(), 21);
    let manifest = read_json(&out_dir.join("gen.manifest.json"));
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["args"]["seed"], 7);
    assert_eq!(manifest["args"]["components"], 100);
    assert!(manifest["started"].is_string() && manifest["finished"].is_string());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen_and_clean(a.path(), "300", "150");
    gen_and_clean(b.path(), "300", "150");
    for root in [a.path(), b.path()] {
        let gen = root.join("gen");
        let out = run(&[
            "--quiet",
            "rag",
            "--plm",
            path(&gen.join("plm.csv")),
            "--qc",
            path(&gen.join("qc.csv")),
            "--truth",
            path(&gen.join("truth.json")),
            "--subset",
            "40",
            "--out",
            path(&root.join("rag_report.json")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run(&[
            "--quiet",
            "eval",
            "--data",
            path(&root.join("data")),
            "--truth",
            path(&gen.join("truth.json")),
            "--out",
            path(&root.join("eval_report.json")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run(&["--quiet", "cost", "--csv", path(&root.join("cost.csv")), "--summary", path(&root.join("cost.json"))]);
        assert!(out.status.success());
    }
    let files = [
        "gen/plm.csv",
        "gen/qc.csv",
        "gen/truth.json",
        "gen/truth_rules.csv",
        "data/rules.csv",
        "data/rules.json",
        "data/qc_augmented.csv",
        "data/review_queue.json",
        "data/diagnostics.json",
        "data/plm.csv",
        "rag_report.json",
        "eval_report.json",
        "cost.csv",
        "cost.json",
    ];
    for f in files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn query_reproduces_truth_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    gen_and_clean(dir.path(), "400", "200");
    let truth = read_json(&dir.path().join("gen/truth.json"));
    let flagged: BTreeSet<String> = read_json(&dir.path().join("data/review_queue.json"))
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["qual_number"].as_str().unwrap().to_string())
        .collect();
    let names = |v: &Value| -> BTreeSet<String> { v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect() };
    let mut checked = 0;
    for (pn, m) in truth["matches"].as_object().unwrap() {
        let direct = names(&m["direct"]);
        if direct.is_empty() || direct.iter().any(|q| flagged.contains(q)) {
            continue;
        }
        let out = run(&["query", "--data", path(&dir.path().join("data")), "--pn", pn, "--json"]);
        assert_eq!(out.status.code(), Some(0));
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["cascade_stage"], "DirectFound");
        let got: BTreeSet<String> = report["direct"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d["qualification"]["number"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(got, direct, "{pn}");
        checked += 1;
        if checked == 5 {
            break;
        }
    }
    assert_eq!(checked, 5);
}

#[test]
fn missing_pn_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    gen_and_clean(dir.path(), "50", "20");
    let data = dir.path().join("data");
    let out = run(&["--json-errors", "query", "--data", path(&data), "--pn", "MISSING"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "pn_not_found");
    assert!(out.stdout.is_empty());
    let manifest = read_json(&data.join("query.manifest.json"));
    assert_eq!(manifest["exit_code"], 2);
    assert!(manifest["input_fingerprints"].as_object().unwrap().keys().any(|k| k.ends_with("plm.csv")));
    assert!(!data.join("decisions.jsonl").exists(), "queries must not create a decision log");

    let empty = tempfile::tempdir().unwrap();
    let out = run(&["--json-errors", "query", "--data", path(empty.path()), "--pn", "P1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "not_loaded");
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("plm.csv");
    std::fs::write(&bogus, "not,a,component,table\n1,2,3,4\n").unwrap();
    let out = run(&["clean", "--plm", path(&bogus), "--qc", path(&bogus), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[limits]\nspeed = 1\n").unwrap();
    let out = run(&["--config", path(&cfg), "cost"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transport_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    gen_and_clean(dir.path(), "30", "10");
    let gen = dir.path().join("gen");
    let out = qualctl()
        .args([
            "--json-errors",
            "clean",
            "--plm",
            path(&gen.join("plm.csv")),
            "--qc",
            path(&gen.join("qc.csv")),
            "--llm",
            "http",
            "--out",
            path(&dir.path().join("http")),
        ])
        .env("LLM_ENDPOINT", "http://127.0.0.1:9/v1/chat/completions")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "transport");
}

#[test]
fn config_file_feeds_cost_and_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("qualctl.toml");
    std::fs::write(
        &cfg,
        "[corpus]\nn_components = 60\nn_qualifications = 25\n\n[cost.vkg_llm]\nsetup_person_days = 30\n",
    )
    .unwrap();
    let summary = dir.path().join("cost.json");
    let out = run(&["--quiet", "--config", path(&cfg), "cost", "--summary", path(&summary)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "--quiet prints nothing");
    let s = read_json(&summary);
    assert_eq!(s["approaches"][2]["setup_person_days"], "30");
    assert_eq!(s["break_even_rag_vkg"], 960.0);

    let gen = dir.path().join("g");
    let out = run(&["--quiet", "--config", path(&cfg), "gen", "--profile", "config", "--out", path(&gen)]);
    assert!(out.status.success());
    let plm = std::fs::read_to_string(gen.join("plm.csv")).unwrap();
    assert_eq!(plm.lines().count(), 61);
}

#[test]
fn serve_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    gen_and_clean(dir.path(), "60", "30");
    let mut child = qualctl()
        .args(["serve", "--port", "0", "--data", path(&dir.path().join("data"))])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("serve exited early").unwrap();
        if let Some(rest) = line.strip_prefix("listening on http://") {
            break rest.to_string();
        }
    };
    let mut stream = TcpStream::connect(&addr).unwrap();
    stream
        .write_all(b"GET /api/cost?n=10000 HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body: Value = serde_json::from_str(response.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert!((body["vkg_savings"].as_f64().unwrap() - 0.803).abs() < 1e-9);
}
