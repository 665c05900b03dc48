//! Pipeline configuration and the patches corrective actions apply to it.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::chunking::{auto_strategy, AutoChunking, ChunkingConfig, Strategy};
use crate::corpus::{DocumentFormat, DocumentStats};
use crate::diagnosis::DiagnosticThresholds;
use crate::evaluation::{Targets, VerdictRules};
use crate::generation::{LmConfig, PromptTemplate};
use crate::retrieval::{RetrievalConfig, RetrievalMode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

fn invalid(field: &'static str, e: impl core::fmt::Display) -> ConfigError {
    ConfigError {
        field,
        message: format!("{e}"),
    }
}

/// Either one strategy for every document or per-document selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChunkingChoice {
    Auto(AutoChunking),
    Uniform(ChunkingConfig),
}

impl Default for ChunkingChoice {
    fn default() -> Self {
        ChunkingChoice::Auto(AutoChunking::default())
    }
}

impl ChunkingChoice {
    /// Strategy used for one document.
    ///
    /// A uniform text strategy applied to a CSV file chunks the raw file text.
    /// Uniform hierarchical falls back to recursive for documents without
    /// headings, and uniform table_row falls back to auto selection for
    /// documents that are not tables.
    pub fn config_for(&self, stats: &DocumentStats) -> ChunkingConfig {
        match *self {
            ChunkingChoice::Auto(auto) => auto_strategy(stats, &auto),
            ChunkingChoice::Uniform(cfg) => match cfg.strategy {
                Strategy::Hierarchical { max_tokens } if !stats.structured => ChunkingConfig {
                    strategy: Strategy::Recursive { max_tokens },
                    ..cfg
                },
                Strategy::TableRow if stats.format != DocumentFormat::CsvTable => auto_strategy(
                    stats,
                    &AutoChunking {
                        short_doc_threshold_tokens: cfg.short_doc_threshold_tokens,
                        ..AutoChunking::default()
                    },
                ),
                _ => cfg,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ChunkingChoice::Auto(auto) => ChunkingConfig::new(Strategy::Recursive {
                max_tokens: auto.max_tokens,
            })
            .validate(),
            ChunkingChoice::Uniform(cfg) => cfg.validate(),
        }
        .map_err(|e| invalid("chunking", e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    #[default]
    Hash,
    Remote {
        endpoint: String,
        model_id: String,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_embed_timeout")]
        timeout_ms: u64,
    },
}

fn default_embed_timeout() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Human label; the effective version appends a content hash.
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_manifest: Option<String>,
    pub chunking: ChunkingChoice,
    pub retrieval: RetrievalConfig,
    pub embedder: EmbedderSpec,
    pub prompt: PromptTemplate,
    pub lm: LmConfig,
    pub targets: Targets,
    pub thresholds: DiagnosticThresholds,
    pub verdict: VerdictRules,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            corpus_manifest: None,
            chunking: ChunkingChoice::default(),
            retrieval: RetrievalConfig::default(),
            embedder: EmbedderSpec::Hash,
            prompt: PromptTemplate::baseline(),
            lm: LmConfig::default(),
            targets: Targets::default(),
            thresholds: DiagnosticThresholds::default(),
            verdict: VerdictRules::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        self.chunking.validate()?;
        self.retrieval.validate().map_err(|e| invalid("retrieval", e))?;
        if let EmbedderSpec::Remote { endpoint, dim, .. } = &self.embedder {
            if endpoint.is_empty() || *dim == 0 {
                return Err(invalid("embedder", "remote embedder needs an endpoint and dim > 0"));
            }
        }
        self.prompt.validate().map_err(|e| invalid("prompt", e))?;
        self.lm.validate().map_err(|e| invalid("lm", e))?;
        self.targets.validate().map_err(|e| invalid("targets", e))?;
        self.thresholds.validate().map_err(|e| invalid("thresholds", e))?;
        Ok(())
    }

    pub fn apply(&mut self, change: &ConfigChange) {
        change.apply(self);
    }
}

/// A single pipeline switch a corrective action can flip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum ConfigChange {
    RetrievalMode {
        mode: RetrievalMode,
    },
    /// Adds `delta` to both arms' k, never going below 1.
    AdjustK {
        delta: i32,
    },
    Grounding {
        enabled: bool,
    },
    StepByStep {
        enabled: bool,
    },
    Chunking {
        choice: ChunkingChoice,
    },
    /// Sets fixed-window overlap, capped below the window size. Other
    /// strategies are left alone.
    ChunkOverlap {
        overlap_tokens: usize,
    },
    Temperature {
        value: f64,
    },
}

impl ConfigChange {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        match self {
            ConfigChange::RetrievalMode { mode } => cfg.retrieval.mode = *mode,
            ConfigChange::AdjustK { delta } => {
                let shift = |k: usize| (k as i64 + i64::from(*delta)).max(1) as usize;
                cfg.retrieval.k_dense = shift(cfg.retrieval.k_dense);
                cfg.retrieval.k_sparse = shift(cfg.retrieval.k_sparse);
            }
            ConfigChange::Grounding { enabled } => cfg.prompt.grounding = *enabled,
            ConfigChange::StepByStep { enabled } => cfg.prompt.step_by_step = *enabled,
            ConfigChange::Chunking { choice } => cfg.chunking = *choice,
            ConfigChange::ChunkOverlap { overlap_tokens } => {
                if let ChunkingChoice::Uniform(ChunkingConfig {
                    strategy:
                        Strategy::Fixed {
                            size_tokens,
                            overlap_tokens: overlap,
                        },
                    ..
                }) = &mut cfg.chunking
                {
                    *overlap = (*overlap_tokens).min(size_tokens.saturating_sub(1));
                }
            }
            ConfigChange::Temperature { value } => cfg.lm.temperature = *value,
        }
    }
}
