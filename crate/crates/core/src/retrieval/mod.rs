//! Sparse, dense and hybrid top-k retrieval over a chunk set.

mod dense;
mod sparse;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::chunking::Chunk;
use crate::text::terms;

pub use dense::{
    cosine, hash_embed, l2_normalize, DenseIndex, EmbedError, Embedder, HashEmbedder, EMBED_BATCH, HASH_EMBED_DIM,
};
pub use sparse::{Bm25Params, SparseIndex};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(String),
    #[error("cannot build an index over zero chunks")]
    EmptyIndex,
    #[error("embedding chunk {chunk_id} failed: {message}")]
    EmbedderFailure { chunk_id: String, message: String },
    #[error("embedding the query failed: {0}")]
    QueryEmbedding(String),
    #[error("unknown chunk {0}")]
    UnknownChunk(String),
    #[error("query has no index terms and no dense arm is available")]
    EmptyQuery,
    #[error("dense retrieval needs an embedder and a dense index")]
    MissingEmbedder,
    #[error("index was embedded with {index}, query embedder is {query}")]
    EmbedderMismatch { index: String, query: String },
    #[error("retrieved chunk {0} is not in the chunk store")]
    UnresolvableChunk(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    DenseOnly,
    SparseOnly,
    Hybrid,
}

impl RetrievalMode {
    pub fn uses_dense(self) -> bool {
        matches!(self, Self::DenseOnly | Self::Hybrid)
    }

    pub fn uses_sparse(self) -> bool {
        matches!(self, Self::SparseOnly | Self::Hybrid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub mode: RetrievalMode,
    pub k_dense: usize,
    pub k_sparse: usize,
    #[serde(default = "default_budget")]
    pub context_budget_tokens: usize,
    #[serde(default)]
    pub bm25: Bm25Params,
}

fn default_budget() -> usize {
    3000
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            mode: RetrievalMode::DenseOnly,
            k_dense: 3,
            k_sparse: 3,
            context_budget_tokens: default_budget(),
            bm25: Bm25Params::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::InvalidConfig(m.into()));
        if self.mode.uses_dense() && self.k_dense == 0 {
            return bad("k_dense must be >= 1");
        }
        if self.mode.uses_sparse() && self.k_sparse == 0 {
            return bad("k_sparse must be >= 1");
        }
        if self.context_budget_tokens == 0 {
            return bad("context_budget_tokens must be >= 1");
        }
        if self.bm25.k1.is_nan() || self.bm25.k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25.b) {
            return bad("bm25 needs k1 >= 0 and 0 <= b <= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Dense,
    Sparse,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub chunk_id: String,
    /// Score in the arm where the item first appeared (cosine or BM25).
    pub score: f64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub query: String,
    pub items: Vec<RetrievedItem>,
}

impl RetrievedContext {
    pub fn chunk_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.chunk_id.as_str())
    }
}

/// Lookup of chunks by id.
pub trait ChunkStore {
    fn get_chunk(&self, chunk_id: &str) -> Option<&Chunk>;
}

impl ChunkStore for BTreeMap<String, Chunk> {
    fn get_chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.get(chunk_id)
    }
}

/// BM25 index plus an optional dense index over the same chunks.
#[derive(Debug, Clone)]
pub struct HybridIndex {
    chunks: Vec<Chunk>,
    by_id: BTreeMap<String, usize>,
    sparse: SparseIndex,
    dense: Option<DenseIndex>,
}

impl ChunkStore for HybridIndex {
    fn get_chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }
}

impl HybridIndex {
    /// Builds the sparse index and, when an embedder is given, the dense one.
    pub fn build(
        chunks: Vec<Chunk>,
        embedder: Option<&dyn Embedder>,
        bm25: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let pairs: Vec<(&str, &str)> = chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())).collect();
        let sparse = SparseIndex::build(pairs.iter().copied(), bm25)?;
        let dense = embedder.map(|e| DenseIndex::build(&pairs, e)).transpose()?;
        Self::assemble(chunks, sparse, dense)
    }

    /// Rebuilds from chunks and previously computed dense vectors.
    pub fn with_dense(chunks: Vec<Chunk>, dense: Option<DenseIndex>, bm25: Bm25Params) -> Result<Self, RetrievalError> {
        if let Some(d) = &dense {
            if d.len() != chunks.len() {
                return Err(RetrievalError::InvalidConfig(alloc::format!(
                    "{} vectors for {} chunks",
                    d.len(),
                    chunks.len()
                )));
            }
        }
        let sparse = SparseIndex::build(chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), bm25)?;
        Self::assemble(chunks, sparse, dense)
    }

    fn assemble(chunks: Vec<Chunk>, sparse: SparseIndex, dense: Option<DenseIndex>) -> Result<Self, RetrievalError> {
        let by_id = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chunk_id.clone(), i))
            .collect();
        Ok(Self {
            chunks,
            by_id,
            sparse,
            dense,
        })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn dense(&self) -> Option<&DenseIndex> {
        self.dense.as_ref()
    }

    /// BM25 score of one chunk for a raw query string.
    pub fn bm25_score(&self, chunk_id: &str, query: &str) -> Result<f64, RetrievalError> {
        self.sparse.score(chunk_id, &terms(query))
    }

    /// Dense arm: top `k` chunks by cosine, ties by chunk id.
    pub fn dense_top_k(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<(usize, f64)>, RetrievalError> {
        let dense = self.dense.as_ref().ok_or(RetrievalError::MissingEmbedder)?;
        if dense.embedder_id() != embedder.embedder_id() {
            return Err(RetrievalError::EmbedderMismatch {
                index: dense.embedder_id().into(),
                query: embedder.embedder_id().into(),
            });
        }
        let q = embedder
            .embed(&[query])
            .map_err(|e| RetrievalError::QueryEmbedding(e.0))?
            .pop()
            .ok_or_else(|| RetrievalError::QueryEmbedding("no vector returned".into()))?;
        if q.len() != dense.dim() {
            return Err(RetrievalError::QueryEmbedding(alloc::format!(
                "query vector has dimension {}, expected {}",
                q.len(),
                dense.dim()
            )));
        }
        let mut scored: Vec<(usize, f64)> = dense.similarities(&q).into_iter().enumerate().collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.chunks[a.0].chunk_id.cmp(&self.chunks[b.0].chunk_id))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// Sparse arm: chunks with positive BM25, best first, ties by chunk id.
    pub fn sparse_top_k(&self, query: &str, k: usize) -> Vec<(usize, f64)> {
        self.sparse.top_k(&terms(query), k)
    }

    /// Top-k retrieval in the configured mode.
    ///
    /// Hybrid mode interleaves the two ranked lists (dense #1, sparse #1,
    /// dense #2, ...). A chunk found by both arms keeps its earliest slot and
    /// is marked [`Source::Both`].
    pub fn query_topk(
        &self,
        query: &str,
        cfg: &RetrievalConfig,
        embedder: Option<&dyn Embedder>,
    ) -> Result<RetrievedContext, RetrievalError> {
        let has_terms = !terms(query).is_empty();
        let dense_hits = if cfg.mode.uses_dense() {
            let embedder = embedder.ok_or(RetrievalError::MissingEmbedder)?;
            self.dense_top_k(query, cfg.k_dense, embedder)?
        } else {
            Vec::new()
        };
        if !cfg.mode.uses_dense() && !has_terms {
            return Err(RetrievalError::EmptyQuery);
        }
        let sparse_hits = if cfg.mode.uses_sparse() {
            self.sparse_top_k(query, cfg.k_sparse)
        } else {
            Vec::new()
        };

        let mut items: Vec<RetrievedItem> = Vec::new();
        let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
        let rounds = dense_hits.len().max(sparse_hits.len());
        for r in 0..rounds {
            for (hit, source) in [(dense_hits.get(r), Source::Dense), (sparse_hits.get(r), Source::Sparse)] {
                let Some(&(ord, score)) = hit else { continue };
                match slot.get(&ord) {
                    Some(&i) => items[i].source = Source::Both,
                    None => {
                        slot.insert(ord, items.len());
                        items.push(RetrievedItem {
                            chunk_id: self.chunks[ord].chunk_id.clone(),
                            score,
                            source,
                        });
                    }
                }
            }
        }
        Ok(RetrievedContext {
            query: query.into(),
            items,
        })
    }
}

pub const CONTEXT_SEPARATOR: &str = "\n-----\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub text: String,
    pub included_chunk_ids: Vec<String>,
    pub total_tokens: usize,
}

/// Joins retrieved chunks in order until the next one would exceed `budget`
/// tokens. The first chunk is always included, whatever its size.
pub fn assemble_context(
    ctx: &RetrievedContext,
    store: &dyn ChunkStore,
    budget: usize,
) -> Result<ContextBlock, RetrievalError> {
    let chunks = ctx
        .items
        .iter()
        .map(|i| {
            store
                .get_chunk(&i.chunk_id)
                .ok_or_else(|| RetrievalError::UnresolvableChunk(i.chunk_id.clone()))
        })
        .collect::<Result<Vec<&Chunk>, _>>()?;
    let mut block = ContextBlock {
        text: String::new(),
        included_chunk_ids: Vec::new(),
        total_tokens: 0,
    };
    for chunk in chunks {
        let first = block.included_chunk_ids.is_empty();
        if !first && block.total_tokens + chunk.token_count > budget {
            break;
        }
        if !first {
            block.text.push_str(CONTEXT_SEPARATOR);
        }
        block.text.push_str(&chunk.text);
        block.total_tokens += chunk.token_count;
        block.included_chunk_ids.push(chunk.chunk_id.clone());
    }
    Ok(block)
}
