//! Segmentation of documents into retrievable chunks.
//!
//! Every chunk produced from a text document is a contiguous slice of the
//! document's `raw_text` (see [`Chunk::char_span`]); split points always fall
//! on non-alphanumeric characters, so no token is ever cut in two. Table rows
//! are the exception: they are synthesized as `header: cell; ...` lines.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    parse_structure, parse_table, DocumentFormat, DocumentStats, IngestError, SourceDocument, Span, Structure,
    TableDocument,
};
use crate::text::{count_tokens, sentence_ranges, token_spans};

/// Smallest accepted `max_tokens` for recursive and hierarchical chunking.
pub const MIN_MAX_TOKENS: usize = 16;
pub const DEFAULT_SHORT_DOC_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("{0}: document is empty")]
    EmptyDocument(String),
    #[error("{0}: hierarchical chunking needs a heading structure")]
    StructureRequired(String),
    #[error("{0}: table has no non-empty rows")]
    EmptyTable(String),
    #[error("{0}: table_row chunking applies to tables only")]
    NotATable(String),
    #[error("invalid chunking config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub token_count: usize,
    #[serde(default)]
    pub section_path: Vec<String>,
    /// Byte span into the source `raw_text`; `None` for table-row chunks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<Span>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    WholeDoc,
    Fixed { size_tokens: usize, overlap_tokens: usize },
    Recursive { max_tokens: usize },
    Hierarchical { max_tokens: usize },
    TableRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub strategy: Strategy,
    #[serde(default = "default_short_doc")]
    pub short_doc_threshold_tokens: usize,
}

fn default_short_doc() -> usize {
    DEFAULT_SHORT_DOC_THRESHOLD
}

impl ChunkingConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            short_doc_threshold_tokens: DEFAULT_SHORT_DOC_THRESHOLD,
        }
    }

    pub fn fixed(size_tokens: usize, overlap_tokens: usize) -> Self {
        Self::new(Strategy::Fixed {
            size_tokens,
            overlap_tokens,
        })
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        match self.strategy {
            Strategy::Fixed {
                size_tokens,
                overlap_tokens,
            } if size_tokens == 0 || overlap_tokens >= size_tokens => Err(ChunkError::InvalidConfig(format!(
                "fixed chunking needs 0 <= overlap ({overlap_tokens}) < size ({size_tokens})"
            ))),
            Strategy::Recursive { max_tokens } | Strategy::Hierarchical { max_tokens }
                if max_tokens < MIN_MAX_TOKENS =>
            {
                Err(ChunkError::InvalidConfig(format!(
                    "max_tokens {max_tokens} is below {MIN_MAX_TOKENS}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Parameters of the per-document strategy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoChunking {
    pub short_doc_threshold_tokens: usize,
    pub max_tokens: usize,
}

impl Default for AutoChunking {
    fn default() -> Self {
        Self {
            short_doc_threshold_tokens: DEFAULT_SHORT_DOC_THRESHOLD,
            max_tokens: 1000,
        }
    }
}

/// Picks a strategy from a document's statistics.
///
/// Tables always get one chunk per row. Short text documents stay whole;
/// longer ones follow their heading structure when they have one.
pub fn auto_strategy(stats: &DocumentStats, auto: &AutoChunking) -> ChunkingConfig {
    let strategy = if stats.format == DocumentFormat::CsvTable {
        Strategy::TableRow
    } else if stats.token_count <= auto.short_doc_threshold_tokens {
        Strategy::WholeDoc
    } else if stats.structured {
        Strategy::Hierarchical {
            max_tokens: auto.max_tokens,
        }
    } else {
        Strategy::Recursive {
            max_tokens: auto.max_tokens,
        }
    };
    ChunkingConfig {
        strategy,
        short_doc_threshold_tokens: auto.short_doc_threshold_tokens,
    }
}

/// Chunks a text document (any format, read as text) with a non-table strategy.
pub fn chunk_document(doc: &SourceDocument, cfg: &ChunkingConfig) -> Result<Vec<Chunk>, ChunkError> {
    cfg.validate()?;
    let text = doc.raw_text.as_str();
    if text.trim().is_empty() {
        return Err(ChunkError::EmptyDocument(doc.doc_id.clone()));
    }
    let whole = Span::new(0, text.len());
    let pieces: Vec<(Vec<String>, Span)> = match cfg.strategy {
        Strategy::WholeDoc => trim_span(text, whole).map(|s| (Vec::new(), s)).into_iter().collect(),
        Strategy::Fixed {
            size_tokens,
            overlap_tokens,
        } => fixed_windows(text, whole, size_tokens, overlap_tokens)
            .into_iter()
            .map(|s| (Vec::new(), s))
            .collect(),
        Strategy::Recursive { max_tokens } => recursive_split(text, whole, max_tokens)
            .into_iter()
            .map(|s| (Vec::new(), s))
            .collect(),
        Strategy::Hierarchical { max_tokens } => {
            let Structure::Tree(tree) = parse_structure(doc)? else {
                return Err(ChunkError::StructureRequired(doc.doc_id.clone()));
            };
            let mut out = Vec::new();
            for span in recursive_split(text, tree.preamble_span, max_tokens) {
                out.push((Vec::new(), span));
            }
            for (path, section) in tree.walk() {
                let has_body = !section.body_text.trim().is_empty();
                if !has_body && !section.is_leaf() {
                    continue;
                }
                let span = Span::new(section.heading_span.start, section.body_span.end);
                let path: Vec<String> = path.iter().map(|s| s.to_string()).collect();
                for piece in recursive_split(text, span, max_tokens) {
                    out.push((path.clone(), piece));
                }
            }
            out
        }
        Strategy::TableRow => return Err(ChunkError::NotATable(doc.doc_id.clone())),
    };
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(ordinal, (section_path, span))| {
            let chunk_text = &text[span.start..span.end];
            Chunk {
                chunk_id: format!("{}#{}", doc.doc_id, ordinal),
                doc_id: doc.doc_id.clone(),
                token_count: count_tokens(chunk_text),
                text: chunk_text.to_string(),
                section_path,
                char_span: Some(span),
            }
        })
        .collect())
}

/// One chunk per data row, each cell prefixed by its column header.
pub fn chunk_table(table: &TableDocument) -> Result<Vec<Chunk>, ChunkError> {
    let chunks: Vec<Chunk> = table
        .rows
        .iter()
        .filter_map(|row| {
            let parts: Vec<String> = table
                .headers
                .iter()
                .zip(row)
                .filter(|(_, cell)| !cell.trim().is_empty())
                .map(|(h, cell)| {
                    if h.is_empty() {
                        cell.clone()
                    } else {
                        format!("{h}: {cell}")
                    }
                })
                .collect();
            (!parts.is_empty()).then(|| parts.join("; "))
        })
        .enumerate()
        .map(|(ordinal, text)| Chunk {
            chunk_id: format!("{}#{}", table.doc_id, ordinal),
            doc_id: table.doc_id.clone(),
            token_count: count_tokens(&text),
            text,
            section_path: Vec::new(),
            char_span: None,
        })
        .collect();
    if chunks.is_empty() {
        return Err(ChunkError::EmptyTable(table.doc_id.clone()));
    }
    Ok(chunks)
}

/// Chunks any document, parsing CSV tables when the strategy is `TableRow`.
pub fn chunk_source(doc: &SourceDocument, cfg: &ChunkingConfig) -> Result<Vec<Chunk>, ChunkError> {
    match cfg.strategy {
        Strategy::TableRow => {
            if doc.format != DocumentFormat::CsvTable {
                return Err(ChunkError::NotATable(doc.doc_id.clone()));
            }
            chunk_table(&parse_table(doc)?)
        }
        _ => chunk_document(doc, cfg),
    }
}

fn trim_span(text: &str, span: Span) -> Option<Span> {
    let slice = &text[span.start..span.end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        None
    } else {
        let start = span.start + lead;
        Some(Span::new(start, start + trimmed.len()))
    }
}

fn fixed_windows(text: &str, span: Span, size: usize, overlap: usize) -> Vec<Span> {
    let tokens: Vec<(usize, usize)> = token_spans(&text[span.start..span.end])
        .map(|(s, e)| (s + span.start, e + span.start))
        .collect();
    if tokens.is_empty() {
        return trim_span(text, span).into_iter().collect();
    }
    let step = size - overlap;
    let mut out = Vec::new();
    let mut first = 0;
    loop {
        let last = (first + size).min(tokens.len());
        out.push(Span::new(tokens[first].0, tokens[last - 1].1));
        if last == tokens.len() {
            break;
        }
        first += step;
    }
    out
}

/// Paragraphs, then sentences, then fixed windows; adjacent pieces are merged
/// back together while they fit in `max_tokens`.
fn recursive_split(text: &str, span: Span, max_tokens: usize) -> Vec<Span> {
    let mut pieces = Vec::new();
    split_level(text, span, max_tokens, 0, &mut pieces);
    merge_pieces(text, pieces, max_tokens)
}

fn split_level(text: &str, span: Span, max: usize, level: u8, out: &mut Vec<Span>) {
    let Some(span) = trim_span(text, span) else {
        return;
    };
    if count_tokens(&text[span.start..span.end]) <= max {
        out.push(span);
        return;
    }
    let parts = match level {
        0 => paragraph_spans(text, span),
        1 => sentence_ranges(&text[span.start..span.end])
            .into_iter()
            .map(|(s, e)| Span::new(span.start + s, span.start + e))
            .collect(),
        _ => {
            out.extend(fixed_windows(text, span, max, 0));
            return;
        }
    };
    if parts.len() <= 1 {
        split_level(text, span, max, level + 1, out);
        return;
    }
    for part in parts {
        split_level(text, part, max, level + 1, out);
    }
}

fn paragraph_spans(text: &str, span: Span) -> Vec<Span> {
    let slice = &text[span.start..span.end];
    let mut out = Vec::new();
    let mut start = 0;
    let mut offset = 0;
    let mut blank_run = false;
    for line in slice.split_inclusive('\n') {
        let is_blank = line.trim().is_empty();
        if is_blank && !blank_run && offset > start {
            out.push(Span::new(span.start + start, span.start + offset));
        }
        if !is_blank && blank_run {
            start = offset;
        }
        blank_run = is_blank;
        offset += line.len();
    }
    if !blank_run && start < slice.len() {
        out.push(Span::new(span.start + start, span.end));
    }
    out
}

fn merge_pieces(text: &str, pieces: Vec<Span>, max: usize) -> Vec<Span> {
    let mut out: Vec<(Span, usize)> = Vec::new();
    for piece in pieces {
        let n = count_tokens(&text[piece.start..piece.end]);
        match out.last_mut() {
            Some((cur, cur_n)) if *cur_n + n <= max => {
                cur.end = piece.end;
                *cur_n += n;
            }
            _ => out.push((piece, n)),
        }
    }
    out.into_iter().map(|(s, _)| s).collect()
}
