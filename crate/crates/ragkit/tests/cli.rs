mod common;

use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use common::Fixture;
use ragkit::io::{read_json, write_json};
use ragkit_core::diagnosis::DiagnosisReport;
use ragkit_core::evaluation::{ComparisonReport, EvaluationRun};

fn ragkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ragkit")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ragkit(args);
    assert!(
        out.status.success(),
        "ragkit {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TESTSET: &str = r#"{"query_id":"speed","question":"What speed should the mixer use for bread dough?","gold_evidence":["Set the mixer to speed 3 for bread dough"],"must_contain":["speed 3"]}
{"query_id":"oven","question":"Which oven temperature before baking bread?","gold_evidence":["Preheat the oven to 220 degrees"],"must_contain":["220"]}
{"query_id":"payroll","question":"When is payroll processed?","must_contain":[]}
"#;

#[test]
fn ingest_index_query_eval_diagnose() {
    let fx = Fixture::new();
    let store = fx.path("cli-store");
    let cfg = fx.path("cfg.json");
    write_json(&cfg, &fx.config).unwrap();
    let testset = fx.path("testset.jsonl");
    std::fs::write(&testset, TESTSET).unwrap();

    let out = ok(&[
        "ingest",
        "--manifest",
        s(&fx.manifest),
        "--store",
        s(&store),
        "--config",
        s(&cfg),
    ]);
    assert!(out.contains("ingested 3 documents"), "{out}");

    let err = ragkit(&["query", "--store", s(&store), "mixer speed"]);
    assert!(!err.status.success());
    assert!(String::from_utf8_lossy(&err.stderr).contains("not built"));

    let out = ok(&["index", "--store", s(&store)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["generation"], 1);

    let out = ok(&[
        "query",
        "--store",
        s(&store),
        "What speed should the mixer use for bread dough?",
    ]);
    assert!(out.starts_with("Use speed 3 for bread dough."), "{out}");
    let out = ok(&[
        "query",
        "--store",
        s(&store),
        "--json",
        "Which oven temperature before baking bread?",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["answer"], "Preheat the oven to 220 degrees.");

    let run_path = fx.path("run.json");
    let out = ok(&[
        "eval",
        "--store",
        s(&store),
        "--testset",
        s(&testset),
        "--out",
        s(&run_path),
        "--agreement",
        "3",
    ]);
    assert!(out.contains("records 3"), "{out}");
    let run: EvaluationRun = read_json(&run_path).unwrap();
    assert_eq!(run.aggregates.records, 3);
    assert_eq!(run.aggregates.correct, 3, "{:#?}", run.records);
    assert_eq!(run.aggregates.metrics.prompt_agreement, Some(1.0));

    let findings = fx.path("findings.jsonl");
    ok(&[
        "finding",
        "--run",
        s(&run_path),
        "--query",
        "oven",
        "--issue",
        "data_access",
        "--note",
        "manual check",
        "--findings",
        s(&findings),
    ]);
    let bad = ragkit(&[
        "finding",
        "--run",
        s(&run_path),
        "--query",
        "oven",
        "--issue",
        "nonsense",
        "--findings",
        s(&findings),
    ]);
    assert!(!bad.status.success());
    let bad = ragkit(&[
        "finding",
        "--run",
        s(&run_path),
        "--query",
        "nope",
        "--issue",
        "data_access",
        "--findings",
        s(&findings),
    ]);
    assert!(!bad.status.success());

    let report_path = fx.path("report.json");
    let text = ok(&[
        "diagnose",
        "--run",
        s(&run_path),
        "--findings",
        s(&findings),
        "--out",
        s(&report_path),
    ]);
    assert!(text.contains("data_access"), "{text}");
    let report: DiagnosisReport = read_json(&report_path).unwrap();
    assert_eq!(report.pareto.total_findings, 1);
}

#[test]
fn compare_two_configs() {
    let fx = Fixture::new();
    let testset = fx.path("testset.jsonl");
    std::fs::write(&testset, TESTSET).unwrap();
    let a = fx.path("a.json");
    let b = fx.path("b.json");
    write_json(&a, &fx.config).unwrap();
    let mut cfg_b = fx.config.clone();
    cfg_b.name = "sparse".into();
    cfg_b.retrieval.mode = ragkit_core::retrieval::RetrievalMode::SparseOnly;
    write_json(&b, &cfg_b).unwrap();

    let out_path = fx.path("cmp.json");
    let out = ok(&[
        "compare",
        "--config-a",
        s(&a),
        "--config-b",
        s(&b),
        "--testset",
        s(&testset),
        "--out",
        s(&out_path),
    ]);
    assert!(out.contains("winner:"), "{out}");
    let report: ComparisonReport = read_json(&out_path).unwrap();
    assert_eq!(report.deltas.len(), 11);
    assert!(report.b.config_version.starts_with("sparse-"));

    let same = ok(&[
        "compare",
        "--config-a",
        s(&a),
        "--config-b",
        s(&a),
        "--testset",
        s(&testset),
    ]);
    assert!(same.contains("winner: Tie"), "{same}");
}

#[test]
fn serve_answers_health_checks() {
    let fx = Fixture::new();
    fx.indexed();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_ragkit"))
        .args([
            "serve",
            "--store",
            s(&fx.store_root),
            "--port",
            &port.to_string(),
            "--token",
            "t0k",
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let url = format!("http://127.0.0.1:{port}/api/health");
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let deadline = Instant::now() + Duration::from_secs(20);
    let status = loop {
        match agent.get(&url).header("Authorization", "Bearer t0k").call() {
            Ok(mut r) => {
                let body: serde_json::Value = r.body_mut().read_json().unwrap();
                break (r.status().as_u16(), body);
            }
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => {
                let _ = child.kill();
                panic!("server never came up: {e}");
            }
        }
    };
    let unauthorized = agent.get(&url).call().unwrap().status().as_u16();
    let _ = child.kill();
    let _ = child.wait();
    assert_eq!(status.0, 200);
    assert_eq!(status.1["status"], "ok");
    assert_eq!(unauthorized, 401);
}
