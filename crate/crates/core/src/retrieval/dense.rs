use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::RetrievalError;
use crate::text::{fnv1a64, token_spans};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("embedder failure: {0}")]
pub struct EmbedError(pub String);

/// Maps texts to fixed-dimension vectors.
///
/// Implementations must be deterministic for a given `embedder_id` and always
/// return `dim()`-long vectors, one per input text.
pub trait Embedder: Send + Sync {
    fn embedder_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

pub const HASH_EMBED_DIM: usize = 64;

/// Signed feature hashing of index terms into 64 buckets, L2-normalized.
///
/// Bucket is `h mod 64`, sign is bit 6 of `h`, where `h` is the FNV-1a hash
/// of the lowercased term. Text without terms maps to the zero vector.
pub fn hash_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; HASH_EMBED_DIM];
    for (s, e) in token_spans(text) {
        let h = fnv1a64(text[s..e].to_lowercase().as_bytes());
        let bucket = (h % HASH_EMBED_DIM as u64) as usize;
        let sign = if h & (1 << 6) != 0 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    l2_normalize(&mut v);
    v
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl Embedder for HashEmbedder {
    fn embedder_id(&self) -> &str {
        "hash-fnv1a-64"
    }

    fn dim(&self) -> usize {
        HASH_EMBED_DIM
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| hash_embed(t)).collect())
    }
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; 0 when either vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (libm::sqrt(na) * libm::sqrt(nb))
}

#[derive(Debug, Clone)]
pub struct DenseIndex {
    embedder_id: String,
    dim: usize,
    /// Normalized vectors by chunk ordinal.
    vectors: Vec<Vec<f64>>,
}

pub const EMBED_BATCH: usize = 32;

impl DenseIndex {
    /// Embeds `(chunk_id, text)` pairs in batches of [`EMBED_BATCH`].
    pub fn build(docs: &[(&str, &str)], embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let dim = embedder.dim();
        let mut vectors = Vec::with_capacity(docs.len());
        for batch in docs.chunks(EMBED_BATCH) {
            let texts: Vec<&str> = batch.iter().map(|&(_, t)| t).collect();
            let fail = |message: String| RetrievalError::EmbedderFailure {
                chunk_id: batch[0].0.into(),
                message,
            };
            let out = embedder.embed(&texts).map_err(|e| fail(e.0))?;
            if out.len() != batch.len() {
                return Err(fail(alloc::format!(
                    "expected {} vectors, got {}",
                    batch.len(),
                    out.len()
                )));
            }
            for ((id, _), mut v) in batch.iter().zip(out) {
                if v.len() != dim {
                    return Err(RetrievalError::EmbedderFailure {
                        chunk_id: (*id).into(),
                        message: alloc::format!("expected dimension {dim}, got {}", v.len()),
                    });
                }
                l2_normalize(&mut v);
                vectors.push(v);
            }
        }
        Ok(Self {
            embedder_id: embedder.embedder_id().into(),
            dim,
            vectors,
        })
    }

    /// Rebuilds an index from persisted vectors (normalized on the way in).
    pub fn from_vectors(embedder_id: String, dim: usize, mut vectors: Vec<Vec<f64>>) -> Result<Self, RetrievalError> {
        for v in &mut vectors {
            if v.len() != dim {
                return Err(RetrievalError::InvalidConfig(alloc::format!(
                    "stored vector has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            l2_normalize(v);
        }
        Ok(Self {
            embedder_id,
            dim,
            vectors,
        })
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, ordinal: usize) -> &[f64] {
        &self.vectors[ordinal]
    }

    /// Cosine similarities of every chunk against `query`, by ordinal.
    pub fn similarities(&self, query: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|v| cosine(v, query)).collect()
    }
}
