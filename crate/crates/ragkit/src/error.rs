use std::path::PathBuf;

use ragkit_core::config::ConfigError;
use ragkit_core::diagnosis::DiagnosisError;
use ragkit_core::evaluation::EvalError;
use ragkit_core::generation::GenerationError;
use ragkit_core::pipeline::PipelineError;
use ragkit_core::retrieval::EmbedError;
use ragkit_core::ticket::TicketError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("ingest failed for {doc}: {cause}")]
    Ingest { doc: String, cause: String },
    #[error("storage error: {0}")]
    Storage(String),
    #[error("index is not built yet")]
    IndexNotReady,
    #[error("no corpus manifest configured")]
    NoManifest,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ticket(#[from] TicketError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("config {label}: {source}")]
    Labeled {
        label: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn labeled(self, label: &'static str) -> Self {
        Error::Labeled {
            label,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
