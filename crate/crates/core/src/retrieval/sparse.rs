//! Okapi BM25 over an inverted index of lowercased alphanumeric terms.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::text::terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
pub struct SparseIndex {
    params: Bm25Params,
    chunk_ids: Vec<String>,
    doc_len: Vec<usize>,
    avgdl: f64,
    /// term -> (chunk ordinal, term frequency), ordinals ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    ordinals: BTreeMap<String, u32>,
}

impl SparseIndex {
    /// Builds the index from `(chunk_id, text)` pairs. Ids must be unique.
    pub fn build<'a, I>(docs: I, params: Bm25Params) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut chunk_ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut ordinals = BTreeMap::new();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (ord, (id, text)) in docs.into_iter().enumerate() {
            let ord = ord as u32;
            if ordinals.insert(String::from(id), ord).is_some() {
                return Err(RetrievalError::DuplicateChunkId(id.into()));
            }
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0;
            for term in terms(text) {
                *tf.entry(term).or_default() += 1;
                len += 1;
            }
            for (term, f) in tf {
                postings.entry(term).or_default().push((ord, f));
            }
            chunk_ids.push(String::from(id));
            doc_len.push(len);
        }
        if chunk_ids.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let avgdl = doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64;
        Ok(Self {
            params,
            chunk_ids,
            doc_len,
            avgdl,
            postings,
            ordinals,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn doc_len(&self, chunk_id: &str) -> Option<usize> {
        self.ordinals.get(chunk_id).map(|&o| self.doc_len[o as usize])
    }

    pub fn term_frequency(&self, term: &str, chunk_id: &str) -> Option<u32> {
        let ord = *self.ordinals.get(chunk_id)?;
        Some(self.tf(term, ord))
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    fn tf(&self, term: &str, ord: u32) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&ord, |&(o, _)| o).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.df(term) as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    fn term_weight(&self, idf: f64, tf: u32, len: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let f = f64::from(tf);
        idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len as f64 / self.avgdl))
    }

    /// BM25 score of one chunk. Repeated query terms count once; terms not in
    /// the index contribute nothing.
    pub fn score(&self, chunk_id: &str, query_terms: &[String]) -> Result<f64, RetrievalError> {
        let ord = *self
            .ordinals
            .get(chunk_id)
            .ok_or_else(|| RetrievalError::UnknownChunk(chunk_id.into()))?;
        let unique: BTreeSet<&str> = query_terms.iter().map(String::as_str).collect();
        let len = self.doc_len[ord as usize];
        Ok(unique
            .into_iter()
            .map(|t| match self.tf(t, ord) {
                0 => 0.0,
                tf => self.term_weight(self.idf(t), tf, len),
            })
            .sum())
    }

    /// Chunks with a positive score, best first, ties by chunk id. At most `k`.
    pub fn top_k(&self, query_terms: &[String], k: usize) -> Vec<(usize, f64)> {
        let unique: BTreeSet<&str> = query_terms.iter().map(String::as_str).collect();
        let mut scores = vec![0.0f64; self.len()];
        let mut touched = BTreeSet::new();
        for t in unique {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for &(ord, tf) in list {
                scores[ord as usize] += self.term_weight(idf, tf, self.doc_len[ord as usize]);
                touched.insert(ord as usize);
            }
        }
        let mut hits: Vec<(usize, f64)> = touched
            .into_iter()
            .map(|o| (o, scores[o]))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.chunk_ids[a.0].cmp(&self.chunk_ids[b.0]))
        });
        hits.truncate(k);
        hits
    }

    pub fn chunk_id(&self, ordinal: usize) -> &str {
        &self.chunk_ids[ordinal]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn index(texts: &[&str]) -> SparseIndex {
        let ids: Vec<String> = (1..=texts.len()).map(|i| alloc::format!("D{i}")).collect();
        SparseIndex::build(
            ids.iter().map(String::as_str).zip(texts.iter().copied()),
            Bm25Params::default(),
        )
        .unwrap()
    }

    fn q(s: &str) -> Vec<String> {
        terms(s)
    }

    #[test]
    fn corpus_statistics() {
        let idx = index(&["a b", "a c", "c c"]);
        assert_eq!(idx.len(), 3);
        assert_eq!((idx.df("a"), idx.df("c"), idx.df("b")), (2, 2, 1));
        assert_eq!(idx.avgdl(), 2.0);
        let one = index(&["x"]);
        assert_eq!((one.len(), one.avgdl()), (1, 1.0));
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = index(&["a b", "a c", "c c"]);
        for id in ["D1", "D2", "D3"] {
            assert_eq!(idx.score(id, &q("zzz")).unwrap(), 0.0);
        }
        assert!(idx.top_k(&q("zzz"), 3).is_empty());
    }

    #[test]
    fn higher_tf_scores_higher() {
        let idx = index(&["a b", "a c", "c c"]);
        let s: Vec<f64> = ["D1", "D2", "D3"]
            .iter()
            .map(|id| idx.score(id, &q("c")).unwrap())
            .collect();
        assert_eq!(s[0], 0.0);
        assert!(s[2] > s[1] && s[1] > 0.0);
        // hand evaluation: N=3, df(c)=2, avgdl=2, |D2|=|D3|=2
        let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
        let d2 = idf * 1.0 * 2.2 / (1.0 + 1.2);
        let d3 = idf * 2.0 * 2.2 / (2.0 + 1.2);
        assert!((s[1] - d2).abs() < 1e-12 && (s[2] - d3).abs() < 1e-12);
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let idx = index(&["a b", "a c", "c c"]);
        assert_eq!(idx.score("D1", &q("a a a")).unwrap(), idx.score("D1", &q("a")).unwrap());
    }

    #[test]
    fn errors() {
        let idx = index(&["a"]);
        assert_eq!(
            idx.score("nope", &q("a")),
            Err(RetrievalError::UnknownChunk("nope".to_string()))
        );
        let dup = SparseIndex::build([("x", "a"), ("x", "b")], Bm25Params::default());
        assert!(matches!(dup, Err(RetrievalError::DuplicateChunkId(_))));
    }

    #[test]
    fn top_k_orders_by_score_then_id() {
        let idx = index(&["c", "a c", "c c", "c"]);
        let hits: Vec<&str> = idx.top_k(&q("c"), 4).iter().map(|&(o, _)| idx.chunk_id(o)).collect();
        assert_eq!(hits, ["D3", "D1", "D4", "D2"]);
    }
}
