//! The long-lived query service: live pipeline, reindexing and feedback tickets.

use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use ragkit_core::config::PipelineConfig;
use ragkit_core::corpus::SourceDocument;
use ragkit_core::evaluation::{compare_runs, ComparisonReport, EvaluationRun, TestQuery};
use ragkit_core::pipeline::{EvalOptions, Pipeline, QueryResponse};
use ragkit_core::ticket::{FeedbackTicket, TicketError, TicketStatus};
use ragkit_core::Clock;
use serde::{Deserialize, Serialize};

use crate::backends::{unix_millis, Backends, SystemClock};
use crate::error::{Error, Result};
use crate::io::{config_version, ingest_manifest, redacted};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReindexOutcome {
    pub config_version: String,
    pub generation: u64,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub config_version: String,
    pub chunk_count: usize,
    pub index_generation: u64,
}

/// Builds a pipeline for `cfg` over `docs` with backends chosen by config.
pub fn build_pipeline(
    cfg: &PipelineConfig,
    docs: &[SourceDocument],
    generation: u64,
    backends: &dyn Backends,
) -> Result<Pipeline> {
    cfg.validate()?;
    let embedder = backends.embedder(cfg)?;
    let lm = backends.language_model(cfg)?;
    Ok(Pipeline::build(
        cfg.clone(),
        config_version(cfg),
        generation,
        docs,
        embedder,
        lm,
    )?)
}

fn manifest_of(cfg: &PipelineConfig) -> Result<&Path> {
    cfg.corpus_manifest.as_deref().map(Path::new).ok_or(Error::NoManifest)
}

/// Ingests the config's corpus, builds the pipeline and evaluates the test set.
pub fn evaluate_config(
    cfg: &PipelineConfig,
    testset: &[TestQuery],
    backends: &dyn Backends,
    opts: &EvalOptions,
    clock: &dyn Clock,
    run_id: String,
) -> Result<EvaluationRun> {
    let docs = ingest_manifest(manifest_of(cfg)?)?;
    let pipeline = build_pipeline(cfg, &docs, 1, backends)?;
    Ok(pipeline.evaluate_run(run_id, testset, opts, clock)?)
}

/// Runs the test set under both configs; the winner is judged by `a`'s targets.
pub fn compare_configs(
    a: &PipelineConfig,
    b: &PipelineConfig,
    testset: &[TestQuery],
    backends: &dyn Backends,
    opts: &EvalOptions,
    clock: &dyn Clock,
) -> Result<ComparisonReport> {
    let run_a = evaluate_config(a, testset, backends, opts, clock, format!("{}-a", config_version(a)))
        .map_err(|e| e.labeled("a"))?;
    let run_b = evaluate_config(b, testset, backends, opts, clock, format!("{}-b", config_version(b)))
        .map_err(|e| e.labeled("b"))?;
    Ok(compare_runs(&run_a, &run_b, &a.targets)?)
}

pub struct Service {
    store: Store,
    backends: Arc<dyn Backends>,
    live: RwLock<Option<Arc<Pipeline>>>,
    rebuild: Mutex<()>,
    tickets: Mutex<Vec<FeedbackTicket>>,
    clock: SystemClock,
}

impl Service {
    /// Opens the store and loads the last built index, if any.
    pub fn open(store: Store, backends: Arc<dyn Backends>) -> Result<Self> {
        let cfg = store.load_config()?;
        let tickets = store.load_tickets()?;
        let live = match store.load_index()? {
            Some(snap) => {
                let version = config_version(&cfg);
                if snap.meta.config_version != version {
                    tracing::warn!(
                        index = %snap.meta.config_version,
                        config = %version,
                        "index was built under another config; reindex to apply it"
                    );
                }
                let titles = store.load_documents().map(|d| Store::titles(&d)).unwrap_or_default();
                let p = Pipeline::from_parts(
                    cfg.clone(),
                    version,
                    snap.meta.generation,
                    snap.chunks,
                    snap.dense,
                    titles,
                    backends.embedder(&cfg)?,
                    backends.language_model(&cfg)?,
                )?;
                Some(Arc::new(p))
            }
            None => None,
        };
        Ok(Self {
            store,
            backends,
            live: RwLock::new(live),
            rebuild: Mutex::new(()),
            tickets: Mutex::new(tickets),
            clock: SystemClock::default(),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// The pipeline serving queries right now. Holding the `Arc` pins its
    /// index generation for as long as the caller needs it.
    pub fn pipeline(&self) -> Result<Arc<Pipeline>> {
        self.live
            .read()
            .expect("lock poisoned")
            .clone()
            .ok_or(Error::IndexNotReady)
    }

    pub fn answer(&self, question: &str) -> Result<QueryResponse> {
        let p = self.pipeline()?;
        Ok(p.answer(question, &self.clock)?)
    }

    fn next_generation(&self) -> u64 {
        let live = self.live.read().expect("lock poisoned");
        let stored = self.store.load_index().ok().flatten().map(|s| s.meta.generation);
        live.as_ref().map(|p| p.generation()).max(stored).unwrap_or(0) + 1
    }

    /// Builds, persists and swaps in a new index over `docs`. Any failure
    /// leaves the live index untouched.
    fn rebuild(&self, docs: &[SourceDocument], save_docs: bool) -> Result<ReindexOutcome> {
        let _serial = self.rebuild.lock().expect("lock poisoned");
        let cfg = self.store.load_config()?;
        let generation = self.next_generation();
        let pipeline = build_pipeline(&cfg, docs, generation, &*self.backends)?;
        if save_docs {
            self.store.save_documents(docs)?;
        }
        let meta = self.store.save_index(&pipeline, unix_millis())?;
        *self.live.write().expect("lock poisoned") = Some(Arc::new(pipeline));
        Ok(ReindexOutcome {
            config_version: meta.config_version,
            generation: meta.generation,
            chunk_count: meta.chunk_count,
        })
    }

    /// Indexes the documents already in the store.
    pub fn index_stored(&self) -> Result<ReindexOutcome> {
        let docs = self.store.load_documents()?;
        self.rebuild(&docs, false)
    }

    /// Re-reads the manifest and rebuilds from scratch.
    pub fn reindex(&self) -> Result<ReindexOutcome> {
        let cfg = self.store.load_config()?;
        let docs = ingest_manifest(manifest_of(&cfg)?)?;
        self.rebuild(&docs, true)
    }

    pub fn health(&self) -> Health {
        match self.pipeline() {
            Ok(p) => Health {
                status: "ok".into(),
                config_version: p.config_version().into(),
                chunk_count: p.chunks().len(),
                index_generation: p.generation(),
            },
            Err(_) => Health {
                status: "no_index".into(),
                config_version: self.store.load_config().map(|c| config_version(&c)).unwrap_or_default(),
                chunk_count: 0,
                index_generation: 0,
            },
        }
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        Ok(redacted(&self.store.load_config()?))
    }

    /// Creates an open ticket. It is on disk before this returns.
    pub fn file_ticket(&self, question: &str, answer_given: &str, reporter: &str) -> Result<FeedbackTicket> {
        let mut book = self.tickets.lock().expect("lock poisoned");
        let seq = book
            .iter()
            .filter_map(|t| t.ticket_id.strip_prefix("T-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0)
            + 1;
        let ticket = FeedbackTicket::open(
            format!("T-{seq:06}"),
            question.into(),
            answer_given.into(),
            reporter.into(),
            unix_millis(),
        );
        let mut next = book.clone();
        next.push(ticket.clone());
        self.store.save_tickets(&next)?;
        *book = next;
        Ok(ticket)
    }

    pub fn transition_ticket(
        &self,
        ticket_id: &str,
        to: TicketStatus,
        author: &str,
        note: &str,
    ) -> Result<FeedbackTicket> {
        let mut book = self.tickets.lock().expect("lock poisoned");
        let pos = book
            .iter()
            .position(|t| t.ticket_id == ticket_id)
            .ok_or_else(|| TicketError::UnknownTicket(ticket_id.into()))?;
        let mut next = book.clone();
        next[pos].transition(to, author, note, unix_millis())?;
        self.store.save_tickets(&next)?;
        *book = next;
        Ok(book[pos].clone())
    }

    pub fn tickets(&self, status: Option<TicketStatus>) -> Vec<FeedbackTicket> {
        let book = self.tickets.lock().expect("lock poisoned");
        book.iter()
            .filter(|t| status.is_none_or(|s| t.status == s))
            .cloned()
            .collect()
    }

    /// Evaluates on the live pipeline and stores the run.
    pub fn evaluate(&self, testset: &[TestQuery], opts: &EvalOptions, run_id: String) -> Result<EvaluationRun> {
        let p = self.pipeline()?;
        let run = p.evaluate_run(run_id, testset, opts, &self.clock)?;
        self.store.save_run(&run)?;
        Ok(run)
    }
}
