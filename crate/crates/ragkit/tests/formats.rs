mod common;

use std::fs;

use common::Fixture;
use proptest::prelude::*;
use ragkit::io::{config_version, ingest_manifest, load_config, read_jsonl, write_jsonl};
use ragkit::Error;
use ragkit_core::config::PipelineConfig;
use ragkit_core::corpus::DocumentFormat;
use ragkit_core::retrieval::RetrievalMode;

fn arb_config() -> impl Strategy<Value = PipelineConfig> {
    (
        "[a-z]{1,8}",
        1usize..20,
        1usize..20,
        prop_oneof![
            Just(RetrievalMode::DenseOnly),
            Just(RetrievalMode::SparseOnly),
            Just(RetrievalMode::Hybrid)
        ],
        any::<bool>(),
        0.0f64..2.0,
    )
        .prop_map(|(name, kd, ks, mode, grounding, temp)| {
            let mut c = PipelineConfig {
                name,
                ..PipelineConfig::default()
            };
            c.retrieval.k_dense = kd;
            c.retrieval.k_sparse = ks;
            c.retrieval.mode = mode;
            c.prompt.grounding = grounding;
            c.lm.temperature = temp;
            c
        })
}

proptest! {
    #[test]
    fn version_is_a_function_of_content(c in arb_config()) {
        let copy: PipelineConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(config_version(&c), config_version(&copy));
        let prefix = format!("{}-", c.name);
        prop_assert!(config_version(&c).starts_with(&prefix));
    }

    #[test]
    fn version_changes_with_content(c in arb_config(), bump in 1usize..5) {
        let mut d = c.clone();
        d.retrieval.k_sparse += bump;
        prop_assert_ne!(config_version(&c), config_version(&d));
        let mut e = c.clone();
        e.prompt.grounding = !e.prompt.grounding;
        prop_assert_ne!(config_version(&c), config_version(&e));
    }
}

#[test]
fn toml_config_with_relative_paths() {
    let fx = Fixture::new();
    let cfg_path = fx.path("corpus/pipeline.toml");
    fs::write(
        &cfg_path,
        r#"
name = "toml"
corpus_manifest = "manifest.json"

[chunking]
mode = "auto"
short_doc_threshold_tokens = 1000
max_tokens = 500

[retrieval]
mode = "sparse_only"
k_dense = 1
k_sparse = 4

[lm]
endpoint = "mock"
model_id = "mock"
mock_script = "../script.json"
"#,
    )
    .unwrap();
    let cfg = load_config(&cfg_path).unwrap();
    assert_eq!(cfg.name, "toml");
    assert_eq!(cfg.retrieval.k_sparse, 4);
    let manifest = cfg.corpus_manifest.as_deref().unwrap();
    assert!(std::path::Path::new(manifest).is_absolute());
    assert_eq!(
        fs::canonicalize(manifest).unwrap(),
        fs::canonicalize(&fx.manifest).unwrap()
    );
    assert!(fs::canonicalize(cfg.lm.mock_script.as_deref().unwrap()).is_ok());
}

#[test]
fn invalid_config_is_rejected_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"retrieval": {"mode": "hybrid", "k_dense": 0, "k_sparse": 3}}"#).unwrap();
    assert!(matches!(load_config(&p), Err(Error::Config(_))));
    fs::write(&p, "{not json").unwrap();
    assert!(matches!(load_config(&p), Err(Error::Parse { .. })));
}

#[test]
fn manifest_overrides_and_formats() {
    let fx = Fixture::new();
    let m = fx.path("corpus/m.toml");
    fs::write(
        &m,
        r#"
[[documents]]
path = "staff.csv"
doc_id = "people"
title = "Staff roster"

[[documents]]
path = "oven.txt"
format = "markdown"
"#,
    )
    .unwrap();
    let docs = ingest_manifest(&m).unwrap();
    assert_eq!(docs[0].doc_id, "people");
    assert_eq!(docs[0].title, "Staff roster");
    assert_eq!(docs[0].format, DocumentFormat::CsvTable);
    assert_eq!(docs[1].doc_id, "oven");
    assert_eq!(docs[1].format, DocumentFormat::Markdown);

    fs::write(&m, "documents = []\n").unwrap();
    assert!(matches!(ingest_manifest(&m), Err(Error::Ingest { .. })));
    fs::write(fx.path("corpus/empty.txt"), "  \n").unwrap();
    fs::write(&m, "[[documents]]\npath = \"empty.txt\"\n").unwrap();
    assert!(matches!(ingest_manifest(&m), Err(Error::Ingest { ref doc, .. }) if doc == "empty.txt"));
}

#[test]
fn jsonl_round_trip() {
    let fx = Fixture::new();
    let docs = ingest_manifest(&fx.manifest).unwrap();
    let p = fx.path("docs.jsonl");
    write_jsonl(&p, &docs).unwrap();
    let back: Vec<ragkit_core::corpus::SourceDocument> = read_jsonl(&p).unwrap();
    assert_eq!(back, docs);
    fs::write(&p, "{\"doc_id\": 1}\n").unwrap();
    let err = read_jsonl::<ragkit_core::corpus::SourceDocument>(&p).unwrap_err();
    assert!(err.to_string().contains("line 1"));
}

#[test]
fn old_snapshots_are_pruned() {
    let fx = Fixture::new();
    let s = fx.indexed();
    for _ in 0..3 {
        s.reindex().unwrap();
    }
    let mut gens: Vec<String> = fs::read_dir(fx.store_root.join("index"))
        .unwrap()
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("gen-"))
        .collect();
    gens.sort();
    assert_eq!(gens, ["gen-000003", "gen-000004"]);
    let current = fs::read_to_string(fx.store_root.join("index/CURRENT")).unwrap();
    assert_eq!(current.trim(), "gen-000004");
    let snap = fx.store().load_index().unwrap().unwrap();
    assert_eq!(snap.meta.generation, 4);
    assert_eq!(snap.chunks.len(), snap.meta.chunk_count);
    assert_eq!(snap.dense.unwrap().len(), snap.meta.chunk_count);
}

#[test]
fn findings_append_and_reload() {
    use ragkit_core::diagnosis::{IssueClass, IssueFinding, Origin};
    let fx = Fixture::new();
    let store = fx.store();
    assert!(store.load_findings().unwrap().is_empty());
    let f = IssueFinding {
        query_id: "q1".into(),
        issue: IssueClass::DataAccess,
        origin: Origin::Manual,
        evidence: "table rows lost their headers".into(),
        metric_value: None,
    };
    store.append_finding(&f).unwrap();
    store.append_finding(&f).unwrap();
    assert_eq!(store.load_findings().unwrap(), vec![f.clone(), f]);
}
