//! Prompt rendering, the language-model interface, and cost accounting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::count_tokens;
use crate::Clock;

pub const BASELINE_TEMPLATE: &str =
    "Using the following contextual elements: {context} respond to the following query: {query}";
pub const GROUNDING_INSTRUCTION: &str = "Do not use your prior knowledge; use only the information provided.";
pub const STEP_BY_STEP_INSTRUCTION: &str = "Think step by step.";
pub const UNKNOWN_ANSWER: &str = "I don't know.";

const CONTEXT_SLOT: &str = "{context}";
const QUERY_SLOT: &str = "{query}";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("template must contain {0} exactly once")]
    MissingPlaceholder(&'static str),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("language model timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider returned {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("language model returned an empty completion")]
    EmptyCompletion,
    #[error("invalid LM config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    #[serde(default)]
    pub grounding: bool,
    #[serde(default)]
    pub step_by_step: bool,
    #[serde(default)]
    pub persona: Option<String>,
    #[serde(default)]
    pub few_shot: Vec<String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::baseline()
    }
}

impl PromptTemplate {
    pub fn baseline() -> Self {
        Self {
            template_id: "baseline".into(),
            body: BASELINE_TEMPLATE.into(),
            grounding: false,
            step_by_step: false,
            persona: None,
            few_shot: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        for slot in [CONTEXT_SLOT, QUERY_SLOT] {
            if self.body.matches(slot).count() != 1 {
                return Err(GenerationError::MissingPlaceholder(slot));
            }
        }
        Ok(())
    }
}

/// Fills `{context}` and `{query}` in one pass, so placeholder-like text
/// inside the inserted values is left alone.
///
/// Persona and few-shot examples are prepended, one per line. The
/// step-by-step instruction and then the grounding instruction are appended
/// on their own lines, so a grounded prompt always ends with
/// [`GROUNDING_INSTRUCTION`].
pub fn render_prompt(tpl: &PromptTemplate, context: &str, query: &str) -> Result<String, GenerationError> {
    tpl.validate()?;
    let mut out = String::new();
    if let Some(persona) = &tpl.persona {
        out.push_str(persona);
        out.push('\n');
    }
    for example in &tpl.few_shot {
        out.push_str(example);
        out.push('\n');
    }
    let body = tpl.body.as_str();
    let c = body.find(CONTEXT_SLOT).expect("validated");
    let q = body.find(QUERY_SLOT).expect("validated");
    let (first, first_val, second, second_val) = if c < q {
        (c, (CONTEXT_SLOT, context), q, (QUERY_SLOT, query))
    } else {
        (q, (QUERY_SLOT, query), c, (CONTEXT_SLOT, context))
    };
    out.push_str(&body[..first]);
    out.push_str(first_val.1);
    out.push_str(&body[first + first_val.0.len()..second]);
    out.push_str(second_val.1);
    out.push_str(&body[second + second_val.0.len()..]);
    if tpl.step_by_step {
        out.push('\n');
        out.push_str(STEP_BY_STEP_INSTRUCTION);
    }
    if tpl.grounding {
        out.push('\n');
        out.push_str(GROUNDING_INSTRUCTION);
    }
    Ok(out)
}

pub const MOCK_ENDPOINT: &str = "mock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    /// Chat-completion URL, or `"mock"` for the scripted responder.
    pub endpoint: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output")]
    pub max_output_tokens: u32,
    /// Currency per million input tokens.
    #[serde(default)]
    pub price_in: f64,
    /// Currency per million output tokens.
    #[serde(default)]
    pub price_out: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Environment variable holding the bearer key for remote endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Script file for the mock endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<String>,
}

fn default_max_output() -> u32 {
    512
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            endpoint: MOCK_ENDPOINT.into(),
            model_id: "mock".into(),
            temperature: 0.0,
            max_output_tokens: default_max_output(),
            price_in: 0.0,
            price_out: 0.0,
            timeout_ms: default_timeout_ms(),
            api_key_env: None,
            mock_script: None,
        }
    }
}

impl LmConfig {
    pub fn is_mock(&self) -> bool {
        self.endpoint == MOCK_ENDPOINT
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: String| Err(GenerationError::InvalidConfig(m));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad(format!("temperature {} must be >= 0", self.temperature));
        }
        if [self.price_in, self.price_out].iter().any(|p| p.is_nan() || *p < 0.0) {
            return bad("prices must be >= 0".into());
        }
        if self.timeout_ms == 0 {
            return bad("timeout must be positive".into());
        }
        if self.endpoint.is_empty() {
            return bad("endpoint is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub model_id: &'a str,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Provider-reported counts, when available.
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GenerationError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub answer: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency: Duration,
    pub cost: f64,
}

pub fn compute_cost(input_tokens: u64, output_tokens: u64, price_in: f64, price_out: f64) -> f64 {
    input_tokens as f64 * price_in / 1e6 + output_tokens as f64 * price_out / 1e6
}

/// Calls the model once and accounts for tokens, latency and cost.
///
/// Token counts fall back to the local tokenizer when the provider does not
/// report them.
pub fn generate(
    lm: &dyn LanguageModel,
    cfg: &LmConfig,
    prompt: &str,
    clock: &dyn Clock,
) -> Result<GenerationResult, GenerationError> {
    if prompt.trim().is_empty() {
        return Err(GenerationError::EmptyPrompt);
    }
    let started = clock.now();
    let completion = lm.complete(&CompletionRequest {
        prompt,
        model_id: &cfg.model_id,
        temperature: cfg.temperature,
        max_output_tokens: cfg.max_output_tokens,
    })?;
    let latency = clock.now().saturating_sub(started);
    if completion.text.trim().is_empty() {
        return Err(GenerationError::EmptyCompletion);
    }
    let input_tokens = completion.input_tokens.unwrap_or_else(|| count_tokens(prompt) as u64);
    let output_tokens = completion
        .output_tokens
        .unwrap_or_else(|| count_tokens(&completion.text) as u64);
    Ok(GenerationResult {
        cost: compute_cost(input_tokens, output_tokens, cfg.price_in, cfg.price_out),
        answer: completion.text,
        input_tokens,
        output_tokens,
        latency,
    })
}

/// One rule of a mock script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Substring that must occur in the prompt.
    #[serde(rename = "match")]
    pub pattern: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
    /// Additional substring that must also occur in the prompt, typically a
    /// piece of the expected context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires: Option<String>,
}

/// Deterministic scripted responder: the first rule whose substrings occur in
/// the prompt answers; otherwise [`UNKNOWN_ANSWER`].
#[derive(Debug, Clone, Default)]
pub struct MockLm {
    rules: Vec<ScriptRule>,
}

impl MockLm {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    pub fn respond(&self, prompt: &str) -> (&str, Option<u64>) {
        self.rules
            .iter()
            .find(|r| {
                prompt.contains(r.pattern.as_str()) && r.requires.as_deref().is_none_or(|req| prompt.contains(req))
            })
            .map_or((UNKNOWN_ANSWER, None), |r| (r.answer.as_str(), r.output_tokens))
    }
}

impl LanguageModel for MockLm {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GenerationError> {
        let (answer, output_tokens) = self.respond(req.prompt);
        Ok(Completion {
            text: answer.to_string(),
            input_tokens: None,
            output_tokens,
        })
    }
}
