//! Chat-completion access: an HTTP client for OpenAI-compatible endpoints
//! with bounded retries, a recorder, and a replay session for offline runs.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("provider refused to answer: {0}")]
    ProviderRefusal(String),
    #[error("provider returned HTTP {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("replay session exhausted after {0} responses")]
    SessionExhausted(usize),
    #[error("request digest mismatch at replay position {position}")]
    DigestMismatch { position: usize },
    #[error("session file error: {0}")]
    Session(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    /// Decoding overrides (temperature, top_p, ...). Empty means provider defaults.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub decoding: BTreeMap<String, Value>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model: model.into(),
            messages,
            decoding: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("at least one message required".into()));
        }
        Ok(())
    }

    /// SHA-256 over the conversation (roles and contents), hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(serde_json::to_string(&m.role).unwrap_or_default().as_bytes());
            h.update([0]);
            h.update(m.content.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, Value>,
}

pub trait ChatClient {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
    /// Model identifier placed into requests.
    fn model(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub endpoint_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Initial backoff; doubled after each retry.
    #[serde(default = "default_backoff_s")]
    pub backoff_s: f64,
}

fn default_timeout_s() -> f64 {
    120.0
}

fn default_max_retries() -> u32 {
    5
}

fn default_backoff_s() -> f64 {
    1.0
}

/// Client for `POST {endpoint_url}` in the OpenAI chat-completions format.
#[derive(Debug)]
pub struct HttpChatClient {
    config: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: ProviderConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::AuthError(format!("environment variable {} is not set", config.api_key_env)))?;
        let timeout = Duration::try_from_secs_f64(config.timeout_s)
            .map_err(|e| LlmError::InvalidRequest(format!("timeout_s: {e}")))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn attempt(&self, request: &ChatRequest) -> Attempt {
        let mut body = serde_json::Map::new();
        body.insert("model".into(), Value::String(request.model.clone()));
        body.insert(
            "messages".into(),
            serde_json::to_value(&request.messages).expect("messages serialize"),
        );
        for (k, v) in &request.decoding {
            body.insert(k.clone(), v.clone());
        }
        let sent = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(Value::Object(body));
        let mut resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::TransportError(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LlmError::TransportError(e.to_string())),
        };
        match status {
            200..=299 => Attempt::Done(parse_completion(&text)),
            401 | 403 => Attempt::Done(Err(LlmError::AuthError(format!("HTTP {status}")))),
            429 => Attempt::Retry(LlmError::RateLimited { retries: 0 }),
            500..=599 => Attempt::Retry(LlmError::ProviderError { status, body: text }),
            _ => Attempt::Done(Err(LlmError::ProviderError { status, body: text })),
        }
    }
}

enum Attempt {
    Done(Result<ChatResponse, LlmError>),
    Retry(LlmError),
}

fn parse_completion(body: &str) -> Result<ChatResponse, LlmError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| LlmError::TransportError(format!("undecodable response body: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::ProviderRefusal("no choices in response".into()))?;
    let finish = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("");
    let text = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    if text.is_empty() {
        return Err(LlmError::ProviderRefusal(format!(
            "empty content (finish_reason {finish:?})"
        )));
    }
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    let mut provider_meta = BTreeMap::new();
    for key in ["id", "model"] {
        if let Some(val) = v.get(key) {
            provider_meta.insert(key.to_string(), val.clone());
        }
    }
    provider_meta.insert("finish_reason".into(), Value::String(finish.into()));
    Ok(ChatResponse {
        text,
        usage,
        provider_meta,
    })
}

impl ChatClient for HttpChatClient {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let per_call = Duration::from_secs_f64(self.config.timeout_s);
        let deadline = Instant::now() + per_call * (self.config.max_retries + 1);
        let mut backoff = Duration::from_secs_f64(self.config.backoff_s);
        let mut retries = 0;
        loop {
            let err = match self.attempt(request) {
                Attempt::Done(Ok(mut resp)) => {
                    resp.provider_meta.insert("retries".into(), Value::from(retries));
                    return Ok(resp);
                }
                Attempt::Done(Err(e)) => return Err(e),
                Attempt::Retry(e) => e,
            };
            let now = Instant::now();
            if retries >= self.config.max_retries || now + backoff >= deadline {
                return Err(match err {
                    LlmError::RateLimited { .. } => LlmError::RateLimited { retries },
                    other => other,
                });
            }
            retries += 1;
            log::warn!(
                "{}: {err}; retry {retries}/{} in {:.2}s",
                self.config.name,
                self.config.max_retries,
                backoff.as_secs_f64()
            );
            thread::sleep(backoff);
            backoff *= 2;
        }
    }

    fn model(&self) -> &str {
        &self.config.model
    }
}

/// One line of a session record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub request_digest: String,
    pub response_text: String,
    #[serde(default)]
    pub usage: Option<Usage>,
}

impl RecordedExchange {
    pub fn response(&self) -> ChatResponse {
        ChatResponse {
            text: self.response_text.clone(),
            usage: self.usage,
            provider_meta: BTreeMap::new(),
        }
    }
}

/// Appends every exchange of the wrapped client to a JSON Lines record.
pub struct RecordingClient<C> {
    inner: C,
    sink: Box<dyn Write + Send>,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn new(inner: C, sink: Box<dyn Write + Send>) -> Self {
        Self { inner, sink }
    }

    pub fn to_file(inner: C, path: &Path) -> Result<Self, LlmError> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Session(e.to_string()))?;
        Ok(Self::new(inner, Box::new(f)))
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let resp = self.inner.chat(request)?;
        let line = RecordedExchange {
            request_digest: request.digest(),
            response_text: resp.text.clone(),
            usage: resp.usage,
        };
        let json = serde_json::to_string(&line).expect("exchange serializes");
        writeln!(self.sink, "{json}")
            .and_then(|_| self.sink.flush())
            .map_err(|e| LlmError::Session(e.to_string()))?;
        Ok(resp)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}

/// Serves recorded responses in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySession {
    exchanges: Vec<RecordedExchange>,
    cursor: usize,
    strict: bool,
}

impl ReplaySession {
    pub fn new(exchanges: Vec<RecordedExchange>, strict: bool) -> Self {
        Self {
            exchanges,
            cursor: 0,
            strict,
        }
    }

    /// Non-strict session over plain response texts.
    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            texts
                .into_iter()
                .map(|t| RecordedExchange {
                    request_digest: String::new(),
                    response_text: t.into(),
                    usage: None,
                })
                .collect(),
            false,
        )
    }

    pub fn load(path: &Path, strict: bool) -> Result<Self, LlmError> {
        let f = File::open(path).map_err(|e| LlmError::Session(format!("{}: {e}", path.display())))?;
        let mut exchanges = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Session(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: RecordedExchange =
                serde_json::from_str(&line).map_err(|e| LlmError::Session(format!("line {}: {e}", i + 1)))?;
            exchanges.push(ex);
        }
        Ok(Self::new(exchanges, strict))
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn replay_chat(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let ex = self
            .exchanges
            .get(self.cursor)
            .ok_or(LlmError::SessionExhausted(self.exchanges.len()))?;
        if self.strict && ex.request_digest != request.digest() {
            return Err(LlmError::DigestMismatch { position: self.cursor });
        }
        self.cursor += 1;
        Ok(ex.response())
    }
}

impl ChatClient for ReplaySession {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        self.replay_chat(request)
    }

    fn model(&self) -> &str {
        "replay"
    }
}
