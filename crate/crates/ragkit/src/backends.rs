//! Clocks, HTTP model clients and the factory that builds them from config.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use ragkit_core::config::{EmbedderSpec, PipelineConfig};
use ragkit_core::generation::{
    Completion, CompletionRequest, GenerationError, LanguageModel, LmConfig, MockLm, ScriptRule,
};
use ragkit_core::retrieval::{l2_normalize, EmbedError, Embedder, HashEmbedder};
use ragkit_core::Clock;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::io::read_structured;

/// Monotonic clock measured from its creation.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

pub fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn api_key(env: Option<&str>) -> Option<String> {
    env.and_then(|name| std::env::var(name).ok()).filter(|k| !k.is_empty())
}

enum CallError {
    Timeout,
    Transport(String),
    Status(u16, String),
    Decode(String),
}

/// POSTs `body`, retrying once when the request never got a response.
fn post_json(agent: &ureq::Agent, url: &str, key: Option<&str>, body: &Value) -> Result<Value, CallError> {
    let once = || {
        let mut req = agent.post(url);
        if let Some(k) = key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        req.send_json(body)
    };
    let resp = match once() {
        Err(ureq::Error::Timeout(_)) => return Err(CallError::Timeout),
        Err(_) => once(),
        ok => ok,
    };
    let mut resp = match resp {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return Err(CallError::Timeout),
        Err(e) => return Err(CallError::Transport(e.to_string())),
    };
    let status = resp.status().as_u16();
    if status >= 400 {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let text: String = text.chars().take(500).collect();
        return Err(CallError::Status(status, text));
    }
    resp.body_mut().read_json::<Value>().map_err(|e| match e {
        ureq::Error::Timeout(_) => CallError::Timeout,
        e => CallError::Decode(e.to_string()),
    })
}

/// OpenAI-compatible chat-completion client.
pub struct ChatClient {
    agent: ureq::Agent,
    endpoint: String,
    key: Option<String>,
    timeout: Duration,
}

impl ChatClient {
    pub fn new(cfg: &LmConfig) -> Self {
        Self {
            agent: agent(cfg.timeout()),
            endpoint: cfg.endpoint.clone(),
            key: api_key(cfg.api_key_env.as_deref()),
            timeout: cfg.timeout(),
        }
    }
}

impl LanguageModel for ChatClient {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GenerationError> {
        let body = json!({
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let v = post_json(&self.agent, &self.endpoint, self.key.as_deref(), &body).map_err(|e| match e {
            CallError::Timeout => GenerationError::Timeout(self.timeout),
            CallError::Transport(m) | CallError::Decode(m) => GenerationError::Transport(m),
            CallError::Status(status, message) => GenerationError::Provider { status, message },
        })?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GenerationError::Transport("response has no choices[0].message.content".into()))?;
        Ok(Completion {
            text: text.to_string(),
            input_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            output_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        })
    }
}

/// OpenAI-compatible embeddings client.
pub struct RemoteEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model_id: String,
    id: String,
    dim: usize,
    key: Option<String>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, model_id: &str, dim: usize, api_key_env: Option<&str>, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            id: format!("remote:{model_id}:{dim}"),
            dim,
            key: api_key(api_key_env),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl Embedder for RemoteEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = json!({"model": self.model_id, "input": texts});
        let v = post_json(&self.agent, &self.endpoint, self.key.as_deref(), &body).map_err(|e| {
            EmbedError(match e {
                CallError::Timeout => "request timed out".into(),
                CallError::Transport(m) | CallError::Decode(m) => m,
                CallError::Status(s, m) => format!("status {s}: {m}"),
            })
        })?;
        let data = v.get("data").cloned().unwrap_or(Value::Null);
        let mut items: Vec<EmbeddingItem> =
            serde_json::from_value(data).map_err(|e| EmbedError(format!("bad embeddings response: {e}")))?;
        items.sort_by_key(|i| i.index.unwrap_or(0));
        if items.len() != texts.len() {
            return Err(EmbedError(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                items.len()
            )));
        }
        items
            .into_iter()
            .map(|mut i| {
                if i.embedding.len() != self.dim {
                    return Err(EmbedError(format!(
                        "expected dimension {}, got {}",
                        self.dim,
                        i.embedding.len()
                    )));
                }
                l2_normalize(&mut i.embedding);
                Ok(i.embedding)
            })
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Rules(Vec<ScriptRule>),
    Wrapped { rules: Vec<ScriptRule> },
}

/// Reads a mock script: a JSON (or TOML) list of rules, or `{rules: [...]}`.
pub fn load_mock_script(path: &Path) -> Result<MockLm> {
    let rules = match read_structured::<ScriptFile>(path)? {
        ScriptFile::Rules(r) | ScriptFile::Wrapped { rules: r } => r,
    };
    Ok(MockLm::new(rules))
}

/// Builds the embedder and language model a config asks for.
pub trait Backends: Send + Sync {
    fn embedder(&self, cfg: &PipelineConfig) -> Result<Arc<dyn Embedder>>;
    fn language_model(&self, cfg: &PipelineConfig) -> Result<Arc<dyn LanguageModel>>;
}

/// Backends described entirely by the config.
#[derive(Debug, Default, Clone, Copy)]
pub struct ConfigBackends;

impl Backends for ConfigBackends {
    fn embedder(&self, cfg: &PipelineConfig) -> Result<Arc<dyn Embedder>> {
        Ok(match &cfg.embedder {
            EmbedderSpec::Hash => Arc::new(HashEmbedder),
            EmbedderSpec::Remote {
                endpoint,
                model_id,
                dim,
                api_key_env,
                timeout_ms,
            } => Arc::new(RemoteEmbedder::new(
                endpoint,
                model_id,
                *dim,
                api_key_env.as_deref(),
                Duration::from_millis(*timeout_ms),
            )),
        })
    }

    fn language_model(&self, cfg: &PipelineConfig) -> Result<Arc<dyn LanguageModel>> {
        if !cfg.lm.is_mock() {
            return Ok(Arc::new(ChatClient::new(&cfg.lm)));
        }
        match &cfg.lm.mock_script {
            Some(path) => Ok(Arc::new(load_mock_script(Path::new(path))?)),
            None => Ok(Arc::new(MockLm::default())),
        }
    }
}

/// The same embedder and model whatever the config says.
#[derive(Clone)]
pub struct FixedBackends {
    pub embedder: Arc<dyn Embedder>,
    pub lm: Arc<dyn LanguageModel>,
}

impl Backends for FixedBackends {
    fn embedder(&self, _: &PipelineConfig) -> Result<Arc<dyn Embedder>> {
        Ok(self.embedder.clone())
    }

    fn language_model(&self, _: &PipelineConfig) -> Result<Arc<dyn LanguageModel>> {
        Ok(self.lm.clone())
    }
}
