//! On-disk state under one directory.
//!
//! ```text
//! config.json          pipeline config
//! documents.jsonl      ingested documents
//! index/CURRENT        name of the live snapshot directory
//! index/gen-NNNNNN/    meta.json, chunks.jsonl, vectors.jsonl
//! tickets.jsonl        feedback tickets
//! findings.jsonl       manual diagnosis findings
//! runs/<run_id>.json   evaluation runs
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ragkit_core::chunking::Chunk;
use ragkit_core::config::PipelineConfig;
use ragkit_core::corpus::SourceDocument;
use ragkit_core::diagnosis::IssueFinding;
use ragkit_core::evaluation::EvaluationRun;
use ragkit_core::pipeline::Pipeline;
use ragkit_core::retrieval::DenseIndex;
use ragkit_core::ticket::FeedbackTicket;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{append_jsonl, read_json, read_jsonl, read_text, write_atomic, write_json, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub config_version: String,
    pub generation: u64,
    pub chunk_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder_id: Option<String>,
    #[serde(default)]
    pub dim: usize,
    pub built_at_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VectorRow {
    chunk_id: String,
    vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IndexSnapshot {
    pub meta: IndexMeta,
    pub chunks: Vec<Chunk>,
    pub dense: Option<DenseIndex>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in [root.clone(), root.join("index"), root.join("runs")] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn save_config(&self, cfg: &PipelineConfig) -> Result<()> {
        write_json(&self.path("config.json"), cfg)
    }

    /// The stored config, or the default when none was saved.
    pub fn load_config(&self) -> Result<PipelineConfig> {
        let p = self.path("config.json");
        if !p.exists() {
            return Ok(PipelineConfig::default());
        }
        let cfg: PipelineConfig = read_json(&p)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save_documents(&self, docs: &[SourceDocument]) -> Result<()> {
        write_jsonl(&self.path("documents.jsonl"), docs)
    }

    pub fn load_documents(&self) -> Result<Vec<SourceDocument>> {
        let p = self.path("documents.jsonl");
        if !p.exists() {
            return Err(Error::Storage("no documents ingested yet".into()));
        }
        read_jsonl(&p)
    }

    /// Writes a fresh snapshot directory, then flips `CURRENT` to it.
    pub fn save_index(&self, pipeline: &Pipeline, built_at_ms: u64) -> Result<IndexMeta> {
        let dense = pipeline.index().dense();
        let meta = IndexMeta {
            config_version: pipeline.config_version().into(),
            generation: pipeline.generation(),
            chunk_count: pipeline.chunks().len(),
            embedder_id: dense.map(|d| d.embedder_id().to_string()),
            dim: dense.map_or(0, |d| d.dim()),
            built_at_ms,
        };
        let name = format!("gen-{:06}", meta.generation);
        let dir = self.path("index").join(&name);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        write_jsonl(&dir.join("chunks.jsonl"), pipeline.chunks())?;
        if let Some(d) = dense {
            let rows: Vec<VectorRow> = pipeline
                .chunks()
                .iter()
                .enumerate()
                .map(|(i, c)| VectorRow {
                    chunk_id: c.chunk_id.clone(),
                    vector: d.vector(i).to_vec(),
                })
                .collect();
            write_jsonl(&dir.join("vectors.jsonl"), &rows)?;
        }
        write_json(&dir.join("meta.json"), &meta)?;
        write_atomic(&self.path("index").join("CURRENT"), name.as_bytes())?;
        self.prune_snapshots(&name);
        Ok(meta)
    }

    fn prune_snapshots(&self, keep: &str) {
        let Ok(entries) = fs::read_dir(self.path("index")) else {
            return;
        };
        let mut gens: Vec<String> = entries
            .flatten()
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("gen-"))
            .collect();
        gens.sort();
        // keep the live snapshot and the one before it
        let Some(pos) = gens.iter().position(|g| g == keep) else {
            return;
        };
        for old in gens.iter().take(pos.saturating_sub(1)) {
            let _ = fs::remove_dir_all(self.path("index").join(old));
        }
    }

    pub fn load_index(&self) -> Result<Option<IndexSnapshot>> {
        let current = self.path("index").join("CURRENT");
        if !current.exists() {
            return Ok(None);
        }
        let dir = self.path("index").join(read_text(&current)?.trim());
        let meta: IndexMeta = read_json(&dir.join("meta.json"))?;
        let chunks: Vec<Chunk> = read_jsonl(&dir.join("chunks.jsonl"))?;
        let dense = match &meta.embedder_id {
            Some(id) => {
                let rows: Vec<VectorRow> = read_jsonl(&dir.join("vectors.jsonl"))?;
                let aligned =
                    rows.len() == chunks.len() && rows.iter().zip(&chunks).all(|(r, c)| r.chunk_id == c.chunk_id);
                if !aligned {
                    return Err(Error::Storage("vectors do not match chunks".into()));
                }
                let vectors = rows.into_iter().map(|r| r.vector).collect();
                Some(
                    DenseIndex::from_vectors(id.clone(), meta.dim, vectors)
                        .map_err(|e| Error::Storage(e.to_string()))?,
                )
            }
            None => None,
        };
        Ok(Some(IndexSnapshot { meta, chunks, dense }))
    }

    pub fn titles(docs: &[SourceDocument]) -> BTreeMap<String, String> {
        docs.iter().map(|d| (d.doc_id.clone(), d.title.clone())).collect()
    }

    pub fn load_tickets(&self) -> Result<Vec<FeedbackTicket>> {
        let p = self.path("tickets.jsonl");
        if p.exists() {
            read_jsonl(&p)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn save_tickets(&self, tickets: &[FeedbackTicket]) -> Result<()> {
        write_jsonl(&self.path("tickets.jsonl"), tickets)
    }

    pub fn save_run(&self, run: &EvaluationRun) -> Result<PathBuf> {
        let p = self.path("runs").join(format!("{}.json", run.run_id));
        write_json(&p, run)?;
        Ok(p)
    }

    pub fn load_run(&self, run_id: &str) -> Result<EvaluationRun> {
        read_json(&self.path("runs").join(format!("{run_id}.json")))
    }

    pub fn append_finding(&self, f: &IssueFinding) -> Result<()> {
        append_jsonl(&self.path("findings.jsonl"), f)
    }

    pub fn load_findings(&self) -> Result<Vec<IssueFinding>> {
        let p = self.path("findings.jsonl");
        if p.exists() {
            read_jsonl(&p)
        } else {
            Ok(Vec::new())
        }
    }
}
