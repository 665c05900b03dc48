//! Normalized document model: plain text, heading-structured markdown, and CSV tables.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text::count_tokens;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("{name}: content is not valid UTF-8")]
    NotUtf8 { name: String },
    #[error("{doc_id}: document has no non-whitespace content")]
    EmptyDocument { doc_id: String },
    #[error("{doc_id}: operation requires {expected:?} but document is {actual:?}")]
    WrongFormat {
        doc_id: String,
        expected: DocumentFormat,
        actual: DocumentFormat,
    },
    #[error("{doc_id}: table has no header record")]
    NoHeader { doc_id: String },
    #[error("{doc_id}: row {row} has {cells} cells but the header has {headers}")]
    RaggedOverflow {
        doc_id: String,
        row: usize,
        cells: usize,
        headers: usize,
    },
    #[error("{doc_id}: malformed CSV")]
    MalformedCsv { doc_id: String },
    #[error("corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    PlainText,
    Markdown,
    CsvTable,
}

impl DocumentFormat {
    /// Format implied by a file name's extension (`.md`, `.csv`, anything else is plain text).
    pub fn from_name(name: &str) -> Self {
        let ext = file_name(name).rsplit_once('.').map(|(_, e)| e);
        match ext {
            Some(e) if e.eq_ignore_ascii_case("md") || e.eq_ignore_ascii_case("markdown") => Self::Markdown,
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::CsvTable,
            _ => Self::PlainText,
        }
    }
}

/// Byte range `[start, end)` into a document's `raw_text`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub format: DocumentFormat,
    pub raw_text: String,
    pub byte_size: usize,
}

/// Optional overrides applied when loading a document.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub doc_id: Option<String>,
    pub title: Option<String>,
    pub format: Option<DocumentFormat>,
}

/// Decodes `bytes` into a [`SourceDocument`].
///
/// `name` is a path or file name; its stem becomes the default `doc_id` and
/// title, and its extension the default format. A leading UTF-8 BOM is
/// stripped. Markdown image links are replaced by their alt text.
pub fn load_document(name: &str, bytes: &[u8], opts: LoadOptions) -> Result<SourceDocument, IngestError> {
    let text = core::str::from_utf8(bytes).map_err(|_| IngestError::NotUtf8 { name: name.to_string() })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let stem = file_stem(name);
    let doc_id = opts.doc_id.unwrap_or_else(|| stem.to_string());
    if text.trim().is_empty() {
        return Err(IngestError::EmptyDocument { doc_id });
    }
    let format = opts.format.unwrap_or_else(|| DocumentFormat::from_name(name));
    let raw_text = match format {
        DocumentFormat::Markdown => strip_image_links(text),
        _ => text.to_string(),
    };
    Ok(SourceDocument {
        title: opts.title.unwrap_or_else(|| stem.to_string()),
        doc_id,
        format,
        raw_text,
        byte_size: bytes.len(),
    })
}

fn file_name(path: &str) -> &str {
    path.rsplit(['/', '\\']).next().unwrap_or(path)
}

fn file_stem(path: &str) -> &str {
    let name = file_name(path);
    match name.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem,
        _ => name,
    }
}

/// Replaces `![alt](target)` with `alt`.
fn strip_image_links(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find("![") {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 2..];
        let parsed = after.find("](").and_then(|close| {
            let alt = &after[..close];
            if alt.contains('\n') {
                return None;
            }
            let target = &after[close + 2..];
            let end = target.find(')')?;
            if target[..end].contains('\n') {
                return None;
            }
            Some((alt, close + 2 + end + 1))
        });
        match parsed {
            Some((alt, consumed)) => {
                out.push_str(alt);
                rest = &after[consumed..];
            }
            None => {
                out.push_str("![");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// A heading and the text up to the next heading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub level: u8,
    /// The heading line including its newline.
    pub heading_span: Span,
    pub body_span: Span,
    pub body_text: String,
    pub children: Vec<Section>,
}

impl Section {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTree {
    pub doc_id: String,
    /// Text before the first heading.
    pub preamble: String,
    pub preamble_span: Span,
    pub sections: Vec<Section>,
}

impl DocumentTree {
    /// Depth-first walk yielding each section with its heading path.
    pub fn walk(&self) -> Vec<(Vec<&str>, &Section)> {
        fn visit<'a>(s: &'a Section, path: &mut Vec<&'a str>, out: &mut Vec<(Vec<&'a str>, &'a Section)>) {
            path.push(&s.heading);
            out.push((path.clone(), s));
            for c in &s.children {
                visit(c, path, out);
            }
            path.pop();
        }
        let mut out = Vec::new();
        let mut path = Vec::new();
        for s in &self.sections {
            visit(s, &mut path, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Structure {
    Tree(DocumentTree),
    Unstructured,
}

struct HeadingLine<'a> {
    level: u8,
    text: &'a str,
    line: Span,
}

fn atx_heading(line: &str) -> Option<(u8, &str)> {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let rest = &line[hashes..];
    if !rest.starts_with(' ') && !rest.starts_with('\t') {
        return None;
    }
    let mut text = rest.trim();
    // closing sequence, e.g. "## Title ##"
    let stripped = text.trim_end_matches('#');
    if stripped.len() != text.len() && (stripped.is_empty() || stripped.ends_with([' ', '\t'])) {
        text = stripped.trim_end();
    }
    Some((hashes as u8, text))
}

/// Parses markdown ATX headings into a section tree.
///
/// A heading whose level is not greater than the previous open heading's
/// level closes sections until one with a smaller level is found, so
/// non-monotone sequences still yield a valid tree. Heading-like lines inside
/// fenced code blocks are body text.
pub fn parse_structure(doc: &SourceDocument) -> Result<Structure, IngestError> {
    if doc.format == DocumentFormat::CsvTable {
        return Err(IngestError::WrongFormat {
            doc_id: doc.doc_id.clone(),
            expected: DocumentFormat::Markdown,
            actual: doc.format,
        });
    }
    let text = doc.raw_text.as_str();
    let mut headings = Vec::new();
    let mut in_fence = false;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.starts_with("```") || content.starts_with("~~~") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some((level, heading)) = atx_heading(content) {
            headings.push(HeadingLine {
                level,
                text: heading,
                line: Span::new(start, offset),
            });
        }
    }
    if headings.is_empty() {
        return Ok(Structure::Unstructured);
    }

    let body_spans: Vec<Span> = headings
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let end = headings.get(i + 1).map_or(text.len(), |n| n.line.start);
            Span::new(h.line.end, end)
        })
        .collect();

    // parent links via an open-heading stack
    let mut parent: Vec<Option<usize>> = vec![None; headings.len()];
    let mut stack: Vec<usize> = Vec::new();
    for (i, h) in headings.iter().enumerate() {
        while let Some(&top) = stack.last() {
            if headings[top].level >= h.level {
                stack.pop();
            } else {
                break;
            }
        }
        parent[i] = stack.last().copied();
        stack.push(i);
    }

    fn build(i: usize, text: &str, headings: &[HeadingLine<'_>], bodies: &[Span], parent: &[Option<usize>]) -> Section {
        let children = (i + 1..headings.len())
            .filter(|&j| parent[j] == Some(i))
            .map(|j| build(j, text, headings, bodies, parent))
            .collect();
        let body = bodies[i];
        Section {
            heading: headings[i].text.to_string(),
            level: headings[i].level,
            heading_span: headings[i].line,
            body_span: body,
            body_text: text[body.start..body.end].to_string(),
            children,
        }
    }

    let sections = (0..headings.len())
        .filter(|&i| parent[i].is_none())
        .map(|i| build(i, text, &headings, &body_spans, &parent))
        .collect();
    let preamble_span = Span::new(0, headings[0].line.start);
    Ok(Structure::Tree(DocumentTree {
        doc_id: doc.doc_id.clone(),
        preamble: text[..preamble_span.end].to_string(),
        preamble_span,
        sections,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDocument {
    pub doc_id: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Parses a CSV document. The first record is the header; short rows are
/// padded with empty cells and cells are trimmed.
pub fn parse_table(doc: &SourceDocument) -> Result<TableDocument, IngestError> {
    if doc.format != DocumentFormat::CsvTable {
        return Err(IngestError::WrongFormat {
            doc_id: doc.doc_id.clone(),
            expected: DocumentFormat::CsvTable,
            actual: doc.format,
        });
    }
    let mut records = read_csv(doc.raw_text.as_bytes()).ok_or_else(|| IngestError::MalformedCsv {
        doc_id: doc.doc_id.clone(),
    })?;
    if records.is_empty() {
        return Err(IngestError::NoHeader {
            doc_id: doc.doc_id.clone(),
        });
    }
    let headers = records.remove(0);
    let width = headers.len();
    let mut rows = Vec::with_capacity(records.len());
    for (i, mut row) in records.into_iter().enumerate() {
        if row.len() > width {
            return Err(IngestError::RaggedOverflow {
                doc_id: doc.doc_id.clone(),
                row: i,
                cells: row.len(),
                headers: width,
            });
        }
        row.resize(width, String::new());
        rows.push(row);
    }
    Ok(TableDocument {
        doc_id: doc.doc_id.clone(),
        headers,
        rows,
    })
}

fn read_csv(mut input: &[u8]) -> Option<Vec<Vec<String>>> {
    use csv_core::{ReadRecordResult, Reader};

    let mut reader = Reader::new();
    let mut records = Vec::new();
    let mut out = vec![0u8; input.len().max(64)];
    let mut ends = vec![0usize; 64];
    let (mut outlen, mut endlen) = (0, 0);
    loop {
        let (res, nin, nout, nend) = reader.read_record(input, &mut out[outlen..], &mut ends[endlen..]);
        input = &input[nin..];
        // field ends are record-relative, tracked by the reader across calls
        outlen += nout;
        endlen += nend;
        match res {
            ReadRecordResult::InputEmpty => {}
            ReadRecordResult::OutputFull => {
                let n = out.len() * 2;
                out.resize(n, 0);
            }
            ReadRecordResult::OutputEndsFull => {
                let n = ends.len() * 2;
                ends.resize(n, 0);
            }
            ReadRecordResult::Record => {
                let mut start = 0;
                let mut fields = Vec::with_capacity(endlen);
                for &end in &ends[..endlen] {
                    let cell = core::str::from_utf8(&out[start..end]).ok()?;
                    fields.push(cell.trim().to_string());
                    start = end;
                }
                records.push(fields);
                outlen = 0;
                endlen = 0;
            }
            ReadRecordResult::End => return Some(records),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentStats {
    pub doc_id: String,
    pub format: DocumentFormat,
    pub token_count: usize,
    /// True when the document has a heading tree. Tables are never structured.
    pub structured: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: Vec<DocumentStats>,
    pub total_tokens: usize,
}

pub fn document_stats(doc: &SourceDocument) -> DocumentStats {
    let structured = doc.format != DocumentFormat::CsvTable && matches!(parse_structure(doc), Ok(Structure::Tree(_)));
    DocumentStats {
        doc_id: doc.doc_id.clone(),
        format: doc.format,
        token_count: count_tokens(&doc.raw_text),
        structured,
    }
}

pub fn corpus_stats(corpus: &[SourceDocument]) -> Result<CorpusStats, IngestError> {
    if corpus.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let documents: Vec<DocumentStats> = corpus.iter().map(document_stats).collect();
    let total_tokens = documents.iter().map(|d| d.token_count).sum();
    Ok(CorpusStats {
        documents,
        total_tokens,
    })
}
