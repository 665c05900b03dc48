//! Retrieval and metric functions checked against naive recomputations.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use ragkit_core::chunking::Chunk;
use ragkit_core::evaluation::{context_precision, context_recall};
use ragkit_core::retrieval::{
    assemble_context, Bm25Params, HashEmbedder, HybridIndex, RetrievalConfig, RetrievalMode, SparseIndex,
    CONTEXT_SEPARATOR,
};

const WORDS: &[&str] = &[
    "valve",
    "Valve",
    "pump",
    "PUMP",
    "mixer",
    "oven",
    "dough",
    "speed",
    "rinse",
    "bowl",
    "Ölfilter",
    "naïve",
    "42",
    "x7",
    "the",
    "a",
];

fn naive_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// BM25 straight from its definition, recomputing every statistic.
fn naive_bm25(corpus: &[String], doc: usize, query: &str, k1: f64, b: f64) -> f64 {
    let docs: Vec<Vec<String>> = corpus.iter().map(|d| naive_tokens(d)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let q: BTreeSet<String> = naive_tokens(query).into_iter().collect();
    let dl = docs[doc].len() as f64;
    let mut score = 0.0;
    for t in &q {
        let tf = docs[doc].iter().filter(|w| *w == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    score
}

fn arb_text(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(
        (
            prop::sample::select(WORDS),
            prop::sample::select(&[" ", ", ", ". ", "\n", "-"][..]),
        ),
        1..max_words,
    )
    .prop_map(|ws| ws.into_iter().map(|(w, sep)| format!("{w}{sep}")).collect())
}

/// Distinct ids whose sort order differs from insertion order.
fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{:03}", (i * 37) % 101)).collect()
}

fn chunk(id: &str, text: &str) -> Chunk {
    Chunk {
        chunk_id: id.into(),
        doc_id: "d".into(),
        text: text.into(),
        token_count: ragkit_core::text::count_tokens(text),
        section_path: vec![],
        char_span: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bm25_matches_the_definition(
        corpus in prop::collection::vec(arb_text(30), 1..50),
        query in arb_text(6),
        k in 1usize..10,
    ) {
        let ids = ids(corpus.len());
        let idx = SparseIndex::build(ids.iter().map(String::as_str).zip(corpus.iter().map(String::as_str)), Bm25Params::default()).unwrap();
        let q = ragkit_core::text::terms(&query);
        let mut naive: Vec<(String, f64)> = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            let expect = naive_bm25(&corpus, i, &query, 1.2, 0.75);
            let got = idx.score(id, &q).unwrap();
            prop_assert!((got - expect).abs() <= 1e-9, "{id}: {got} vs {expect}");
            naive.push((id.clone(), expect));
        }
        naive.retain(|(_, s)| *s > 0.0);
        naive.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        naive.truncate(k);
        let top: Vec<&str> = idx.top_k(&q, k).into_iter().map(|(o, _)| idx.chunk_id(o)).collect();
        let expect: Vec<&str> = naive.iter().map(|(id, _)| id.as_str()).collect();
        prop_assert_eq!(top, expect);
    }

    #[test]
    fn precision_and_recall_match_bitsets(retrieved in 0u32..(1 << 20), gold in 0u32..(1 << 20)) {
        let as_ids = |mask: u32| -> Vec<String> { (0..20).filter(|b| mask & (1 << b) != 0).map(|b| format!("id{b}")).collect() };
        let r = as_ids(retrieved);
        let g: BTreeSet<String> = as_ids(gold).into_iter().collect();
        let both = (retrieved & gold).count_ones() as f64;
        let p = (retrieved != 0 && gold != 0).then(|| both / retrieved.count_ones() as f64);
        let rc = (gold != 0).then(|| both / gold.count_ones() as f64);
        prop_assert_eq!(context_precision(&r, &g), p);
        prop_assert_eq!(context_recall(&r, &g), rc);
    }

    #[test]
    fn hybrid_is_the_deduplicated_union(
        corpus in prop::collection::vec(arb_text(20), 1..40),
        query in arb_text(5),
        kd in 1usize..6,
        ks in 1usize..6,
    ) {
        let ids = ids(corpus.len());
        let chunks: Vec<Chunk> = ids.iter().zip(&corpus).map(|(i, t)| chunk(i, t)).collect();
        let idx = HybridIndex::build(chunks, Some(&HashEmbedder), Bm25Params::default()).unwrap();
        let cfg = RetrievalConfig { mode: RetrievalMode::Hybrid, k_dense: kd, k_sparse: ks, ..RetrievalConfig::default() };
        let ctx = idx.query_topk(&query, &cfg, Some(&HashEmbedder)).unwrap();
        let got: Vec<&str> = ctx.chunk_ids().collect();
        let unique: BTreeSet<&str> = got.iter().copied().collect();
        prop_assert_eq!(unique.len(), got.len());
        let dense: BTreeSet<String> = idx.dense_top_k(&query, kd, &HashEmbedder).unwrap().into_iter().map(|(o, _)| idx.chunks()[o].chunk_id.clone()).collect();
        let sparse: BTreeSet<String> = idx.sparse_top_k(&query, ks).into_iter().map(|(o, _)| idx.chunks()[o].chunk_id.clone()).collect();
        let union: BTreeSet<&str> = dense.iter().chain(&sparse).map(String::as_str).collect();
        prop_assert_eq!(unique, union);
        prop_assert!(got.len() <= kd + ks);
    }

    #[test]
    fn assembly_respects_budget(
        corpus in prop::collection::vec(arb_text(40), 1..20),
        budget in 1usize..200,
    ) {
        let ids = ids(corpus.len());
        let chunks: Vec<Chunk> = ids.iter().zip(&corpus).map(|(i, t)| chunk(i, t)).collect();
        let by_id: BTreeMap<&str, &Chunk> = chunks.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
        let idx = HybridIndex::build(chunks.clone(), None, Bm25Params::default()).unwrap();
        let cfg = RetrievalConfig { mode: RetrievalMode::SparseOnly, k_sparse: 20, ..RetrievalConfig::default() };
        let Ok(ctx) = idx.query_topk("valve pump mixer oven dough", &cfg, None) else { return Ok(()) };
        let block = assemble_context(&ctx, &idx, budget).unwrap();
        let order: Vec<&str> = ctx.chunk_ids().collect();
        prop_assert_eq!(&order[..block.included_chunk_ids.len()], &block.included_chunk_ids[..]);
        let total: usize = block.included_chunk_ids.iter().map(|id| by_id[id.as_str()].token_count).sum();
        prop_assert_eq!(total, block.total_tokens);
        prop_assert!(block.included_chunk_ids.len() <= 1 || total <= budget);
        let joined = block.included_chunk_ids.iter().map(|id| by_id[id.as_str()].text.as_str()).collect::<Vec<_>>().join(CONTEXT_SEPARATOR);
        prop_assert_eq!(joined, block.text);
    }
}
