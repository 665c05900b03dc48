//! A configured pipeline: chunked corpus, index, embedder and language model.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_source, Chunk, ChunkError};
use crate::config::{ChunkingChoice, ConfigError, PipelineConfig};
use crate::corpus::{document_stats, SourceDocument};
use crate::evaluation::{
    answer_agreement, answer_relevance, classify_verdict, faithfulness, faithfulness_judged, validate_testset,
    EvalError, EvaluationRun, GoldSet, MetricValues, QueryRecord, TestQuery,
};
use crate::generation::{generate, render_prompt, GenerationError, LanguageModel};
use crate::retrieval::{assemble_context, ChunkStore, DenseIndex, Embedder, HybridIndex, RetrievalError};
use crate::Clock;

pub const EXCERPT_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("index is not built yet")]
    IndexNotReady,
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("document {doc_id:?}: {source}")]
    Chunking { doc_id: String, source: ChunkError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

/// Chunks every document with the strategy the choice selects for it.
pub fn chunk_corpus(docs: &[SourceDocument], choice: &ChunkingChoice) -> Result<Vec<Chunk>, PipelineError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for doc in docs {
        if seen.insert(doc.doc_id.as_str(), ()).is_some() {
            return Err(PipelineError::DuplicateDocument(doc.doc_id.clone()));
        }
        let cfg = choice.config_for(&document_stats(doc));
        let chunks = chunk_source(doc, &cfg).map_err(|source| PipelineError::Chunking {
            doc_id: doc.doc_id.clone(),
            source,
        })?;
        out.extend(chunks);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub doc_id: String,
    pub doc_title: String,
    pub chunk_id: String,
    pub excerpt: String,
    pub score: f64,
    pub section_path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    /// The chunks that made it into the prompt, in context order.
    pub sources: Vec<SourceRef>,
    pub latency_ms: f64,
    pub cost: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub config_version: String,
    pub index_generation: u64,
    /// Everything retrieval returned, including chunks cut by the budget.
    pub retrieved_ids: Vec<String>,
}

pub fn excerpt(text: &str) -> String {
    match text.char_indices().nth(EXCERPT_CHARS) {
        Some((i, _)) => text[..i].to_string(),
        None => text.to_string(),
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    config_version: String,
    generation: u64,
    index: HybridIndex,
    titles: BTreeMap<String, String>,
    embedder: Arc<dyn Embedder>,
    lm: Arc<dyn LanguageModel>,
}

impl core::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config_version", &self.config_version)
            .field("generation", &self.generation)
            .field("chunks", &self.index.len())
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    /// Chunks and indexes `docs`. The dense index is built only when the
    /// retrieval mode uses it.
    pub fn build(
        config: PipelineConfig,
        config_version: String,
        generation: u64,
        docs: &[SourceDocument],
        embedder: Arc<dyn Embedder>,
        lm: Arc<dyn LanguageModel>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let chunks = chunk_corpus(docs, &config.chunking)?;
        let dense_embedder = config.retrieval.mode.uses_dense().then_some(&*embedder);
        let index = HybridIndex::build(chunks, dense_embedder, config.retrieval.bm25)?;
        let titles = docs.iter().map(|d| (d.doc_id.clone(), d.title.clone())).collect();
        Ok(Self {
            config,
            config_version,
            generation,
            index,
            titles,
            embedder,
            lm,
        })
    }

    /// Reassembles a pipeline from persisted chunks and vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: PipelineConfig,
        config_version: String,
        generation: u64,
        chunks: Vec<Chunk>,
        dense: Option<DenseIndex>,
        titles: BTreeMap<String, String>,
        embedder: Arc<dyn Embedder>,
        lm: Arc<dyn LanguageModel>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let dense = if config.retrieval.mode.uses_dense() {
            match dense {
                Some(d) => Some(d),
                None => {
                    let pairs: Vec<(&str, &str)> =
                        chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())).collect();
                    Some(DenseIndex::build(&pairs, &*embedder)?)
                }
            }
        } else {
            None
        };
        let index = HybridIndex::with_dense(chunks, dense, config.retrieval.bm25)?;
        Ok(Self {
            config,
            config_version,
            generation,
            index,
            titles,
            embedder,
            lm,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn config_version(&self) -> &str {
        &self.config_version
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn index(&self) -> &HybridIndex {
        &self.index
    }

    pub fn chunks(&self) -> &[Chunk] {
        self.index.chunks()
    }

    pub fn titles(&self) -> &BTreeMap<String, String> {
        &self.titles
    }

    pub fn embedder(&self) -> &dyn Embedder {
        &*self.embedder
    }

    pub fn language_model(&self) -> &dyn LanguageModel {
        &*self.lm
    }

    /// Retrieve, assemble, render and generate.
    pub fn answer(&self, question: &str, clock: &dyn Clock) -> Result<QueryResponse, PipelineError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        let started = clock.now();
        let cfg = &self.config;
        let ctx = self.index.query_topk(question, &cfg.retrieval, Some(&*self.embedder))?;
        let block = assemble_context(&ctx, &self.index, cfg.retrieval.context_budget_tokens)?;
        let prompt = render_prompt(&cfg.prompt, &block.text, question)?;
        let gen = generate(&*self.lm, &cfg.lm, &prompt, clock)?;
        let scores: BTreeMap<&str, f64> = ctx.items.iter().map(|i| (i.chunk_id.as_str(), i.score)).collect();
        let sources = block
            .included_chunk_ids
            .iter()
            .filter_map(|id| self.index.get_chunk(id))
            .map(|c| SourceRef {
                doc_id: c.doc_id.clone(),
                doc_title: self.titles.get(&c.doc_id).cloned().unwrap_or_else(|| c.doc_id.clone()),
                chunk_id: c.chunk_id.clone(),
                excerpt: excerpt(&c.text),
                score: scores.get(c.chunk_id.as_str()).copied().unwrap_or(0.0),
                section_path: c.section_path.clone(),
            })
            .collect();
        let latency = clock.now().saturating_sub(started);
        Ok(QueryResponse {
            answer: gen.answer,
            sources,
            latency_ms: latency.as_secs_f64() * 1000.0,
            cost: gen.cost,
            input_tokens: gen.input_tokens,
            output_tokens: gen.output_tokens,
            config_version: self.config_version.clone(),
            index_generation: self.generation,
            retrieved_ids: ctx.items.into_iter().map(|i| i.chunk_id).collect(),
        })
    }

    /// Mean pairwise term-set Jaccard over `n` runs of the same question.
    pub fn prompt_agreement(&self, question: &str, n: usize, clock: &dyn Clock) -> Result<f64, PipelineError> {
        if n < 2 {
            return Err(PipelineError::Config(ConfigError {
                field: "n_agreement",
                message: "prompt agreement needs n >= 2".into(),
            }));
        }
        let answers = (0..n)
            .map(|_| self.answer(question, clock).map(|r| r.answer))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(answer_agreement(&answers).expect("n >= 2"))
    }

    /// Evaluates one test query. Pipeline failures become an incorrect
    /// record carrying the error text.
    pub fn evaluate_query(&self, tq: &TestQuery, opts: &EvalOptions, clock: &dyn Clock) -> QueryRecord {
        let resp = match self.answer(&tq.question, clock) {
            Ok(r) => r,
            Err(e) => return QueryRecord::failed(&tq.query_id, e.to_string()),
        };
        let (verdict, contradiction) = classify_verdict(&resp.answer, tq, &self.config.verdict);
        let gold = GoldSet::resolve(&tq.gold_chunk_ids, &tq.gold_evidence, self.chunks());
        let context: Vec<&str> = resp
            .sources
            .iter()
            .filter_map(|s| self.index.get_chunk(&s.chunk_id))
            .map(|c| c.text.as_str())
            .collect();
        let mut errors = Vec::new();
        let substantive = !resp.answer.trim().is_empty() && !self.config.verdict.is_uncertain(&resp.answer);
        let faith = if !substantive {
            None
        } else if opts.judge_faithfulness {
            faithfulness_judged(&resp.answer, &context, &*self.lm, &self.config.lm).unwrap_or_else(|e| {
                errors.push(alloc::format!("faithfulness: {e}"));
                None
            })
        } else {
            faithfulness(&resp.answer, &context)
        };
        let relevance = if opts.compute_relevance && !resp.answer.trim().is_empty() {
            answer_relevance(
                &resp.answer,
                &tq.question,
                &*self.lm,
                &self.config.lm,
                &*self.embedder,
                opts.relevance_samples,
            )
            .map_err(|e| errors.push(alloc::format!("answer_relevance: {e}")))
            .ok()
        } else {
            None
        };
        let agreement = match opts.n_agreement {
            Some(n) if n >= 2 => {
                let mut answers = Vec::with_capacity(n);
                answers.push(resp.answer.clone());
                for _ in 1..n {
                    match self.answer(&tq.question, clock) {
                        Ok(r) => answers.push(r.answer),
                        Err(e) => {
                            errors.push(alloc::format!("prompt_agreement: {e}"));
                            break;
                        }
                    }
                }
                answer_agreement(&answers).ok().filter(|_| answers.len() == n)
            }
            _ => None,
        };
        QueryRecord {
            query_id: tq.query_id.clone(),
            metrics: MetricValues {
                context_precision: gold.precision(&resp.retrieved_ids),
                context_recall: gold.recall(&resp.retrieved_ids),
                faithfulness: faith,
                answer_relevance: relevance,
                prompt_agreement: agreement,
            },
            retrieved_ids: resp.retrieved_ids,
            answer: resp.answer,
            latency_ms: resp.latency_ms,
            cost: resp.cost,
            verdict,
            contradiction,
            error: (!errors.is_empty()).then(|| errors.join("; ")),
        }
    }

    /// Runs the whole test set in order.
    pub fn evaluate_run(
        &self,
        run_id: String,
        testset: &[TestQuery],
        opts: &EvalOptions,
        clock: &dyn Clock,
    ) -> Result<EvaluationRun, EvalError> {
        validate_testset(testset)?;
        let records = testset.iter().map(|tq| self.evaluate_query(tq, opts, clock)).collect();
        Ok(EvaluationRun::new(run_id, self.config_version.clone(), records))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Repeat each query this many times for prompt agreement.
    pub n_agreement: Option<usize>,
    pub compute_relevance: bool,
    pub relevance_samples: usize,
    /// Ask the language model instead of the lexical heuristic.
    pub judge_faithfulness: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_agreement: None,
            compute_relevance: false,
            relevance_samples: 3,
            judge_faithfulness: false,
        }
    }
}
