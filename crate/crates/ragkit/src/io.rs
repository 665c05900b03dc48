//! File formats: corpus manifests, pipeline configs, test sets and JSON(L) helpers.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ragkit_core::config::{EmbedderSpec, PipelineConfig};
use ragkit_core::corpus::{load_document, DocumentFormat, LoadOptions, SourceDocument};
use ragkit_core::evaluation::TestQuery;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DocumentFormat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub documents: Vec<ManifestEntry>,
}

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads JSON, or TOML when the extension is `.toml`.
pub fn read_structured<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    if is_toml(path) {
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    read_structured(path)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parent(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

/// Loads every document a manifest lists. The first failure aborts.
pub fn ingest_manifest(path: &Path) -> Result<Vec<SourceDocument>> {
    let manifest = load_manifest(path)?;
    let base = parent(path);
    let mut docs = Vec::with_capacity(manifest.documents.len());
    for entry in &manifest.documents {
        let file = resolve(base, &entry.path);
        let bytes = fs::read(&file).map_err(|e| Error::Ingest {
            doc: entry.path.clone(),
            cause: e.to_string(),
        })?;
        let opts = LoadOptions {
            doc_id: entry.doc_id.clone(),
            title: entry.title.clone(),
            format: entry.format,
        };
        let doc = load_document(&entry.path, &bytes, opts).map_err(|e| Error::Ingest {
            doc: entry.path.clone(),
            cause: e.to_string(),
        })?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::Ingest {
            doc: path.display().to_string(),
            cause: "manifest lists no documents".into(),
        });
    }
    Ok(docs)
}

/// Loads and validates a config. Relative paths inside it are resolved
/// against the config file's directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = read_structured(path)?;
    let base = parent(path);
    let absolute = |p: &mut String| {
        let resolved = resolve(base, p);
        *p = std::path::absolute(&resolved)
            .unwrap_or(resolved)
            .to_string_lossy()
            .into_owned();
    };
    if let Some(m) = cfg.corpus_manifest.as_mut() {
        absolute(m);
    }
    if let Some(s) = cfg.lm.mock_script.as_mut() {
        absolute(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `name-<first 12 hex digits of SHA-256 over the config's JSON>`.
pub fn config_version(cfg: &PipelineConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&json);
    format!("{}-{}", cfg.name, &hex::encode(digest)[..12])
}

fn redact_url(raw: &str) -> String {
    match url::Url::parse(raw) {
        Ok(mut u) => {
            if !u.username().is_empty() || u.password().is_some() {
                let _ = u.set_username("");
                let _ = u.set_password(None);
            }
            if u.query().is_some() {
                u.set_query(Some("redacted"));
            }
            u.to_string()
        }
        Err(_) => raw.to_string(),
    }
}

/// Copy safe to show to API clients: endpoint credentials and query strings removed.
pub fn redacted(cfg: &PipelineConfig) -> PipelineConfig {
    let mut out = cfg.clone();
    out.lm.endpoint = redact_url(&out.lm.endpoint);
    if let EmbedderSpec::Remote { endpoint, .. } = &mut out.embedder {
        *endpoint = redact_url(endpoint);
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_testset(path: &Path) -> Result<Vec<TestQuery>> {
    read_jsonl(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

/// Writes to a sibling temp file, syncs it, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent(path);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::parse(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item).map_err(|e| Error::parse(path, e))?;
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    let mut line = serde_json::to_vec(item).map_err(|e| Error::parse(path, e))?;
    line.push(b'\n');
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(&line).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_content_addressed() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(config_version(&a), config_version(&b));
        b.retrieval.k_dense += 1;
        assert_ne!(config_version(&a), config_version(&b));
        assert!(config_version(&a).starts_with("default-"));
        assert_eq!(config_version(&a).len(), "default-".len() + 12);
    }

    #[test]
    fn redaction_strips_credentials() {
        assert_eq!(
            redact_url("https://user:pw@api.example.com/v1/chat?key=abc"),
            "https://api.example.com/v1/chat?redacted"
        );
        assert_eq!(redact_url("mock"), "mock");
    }
}
