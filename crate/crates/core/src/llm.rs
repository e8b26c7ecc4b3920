//! OpenAI-compatible chat-completions transport shared by judges, generators
//! and the feedback writer.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::judge::prompts::TaskId;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl TransportError {
    /// Connection problems, timeouts, rate limits and server errors are retried;
    /// other client errors and undecodable bodies are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Request(_) | TransportError::Timeout => true,
            TransportError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

/// How a structured `{reasoning, answer}` object is requested from the endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructuredOutput {
    /// `response_format: {type: "json_schema", ...}`.
    #[default]
    JsonSchema,
    /// `response_format: {type: "json_object"}`.
    JsonObject,
    /// No constraint; rely on the prompt and the lenient parser.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub task: TaskId,
    pub system: String,
    pub user: String,
    pub temperature: Option<f64>,
    pub structured: bool,
    /// Which repeated sample this is. Remote endpoints ignore it; scripted
    /// backends use it to replay vote sequences deterministically.
    pub sample: usize,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: usize) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            factor: 2,
        }
    }

    /// Calls `op` until it succeeds, fails with a non-retryable error, or the
    /// attempt budget is spent. Sleeps `base * factor^k` between attempts.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, TransportError>) -> Result<T, TransportError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_attempts.max(1) => {
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    delay *= self.factor;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting gate bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyGate {
    available: Mutex<usize>,
    freed: Condvar,
}

impl ConcurrencyGate {
    pub fn new(limit: usize) -> Self {
        Self {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.available.lock();
            while *n == 0 {
                self.freed.wait(&mut n);
            }
            *n -= 1;
        }
        let out = f();
        *self.available.lock() += 1;
        self.freed.notify_one();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub structured: StructuredOutput,
    pub concurrency_limit: usize,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        f64::deserialize(d).map(Duration::from_secs_f64)
    }
}

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct OpenAiChat {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    structured: StructuredOutput,
    gate: ConcurrencyGate,
}

impl OpenAiChat {
    pub fn new(config: &EndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty());
        Ok(Self {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            api_key,
            structured: config.structured,
            gate: ConcurrencyGate::new(config.concurrency_limit),
        })
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        if request.structured {
            match self.structured {
                StructuredOutput::JsonSchema => {
                    body["response_format"] = json!({
                        "type": "json_schema",
                        "json_schema": {
                            "name": "verdict",
                            "strict": true,
                            "schema": {
                                "type": "object",
                                "properties": {
                                    "reasoning": {"type": "string"},
                                    "answer": {"type": "string"}
                                },
                                "required": ["reasoning", "answer"],
                                "additionalProperties": false
                            }
                        }
                    });
                }
                StructuredOutput::JsonObject => body["response_format"] = json!({"type": "json_object"}),
                StructuredOutput::None => {}
            }
        }
        body
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

impl ChatBackend for OpenAiChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = self.request_body(request);
        self.gate.run(|| {
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Request(e.to_string())
                }
            })?;
            let status = resp.status();
            let text = resp.text().map_err(|e| TransportError::Request(e.to_string()))?;
            if !status.is_success() {
                return Err(TransportError::Status {
                    status: status.as_u16(),
                    body: text.chars().take(500).collect(),
                });
            }
            let parsed: CompletionResponse =
                serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))?;
            parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| TransportError::Decode("response has no message content".into()))
        })
    }
}

/// Checks that something answers HTTP at the endpoint by requesting
/// `{base_url}/models`. Any HTTP response counts; only connection failures
/// and timeouts are errors.
pub fn probe(config: &EndpointConfig, timeout: Duration) -> Result<(), TransportError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| TransportError::Request(e.to_string()))?;
    let url = format!("{}/models", config.base_url.trim_end_matches('/'));
    match client.get(&url).send() {
        Ok(resp) => {
            log::debug!("probe {url}: {}", resp.status());
            Ok(())
        }
        Err(e) if e.is_timeout() => Err(TransportError::Timeout),
        Err(e) => Err(TransportError::Request(format!("{url}: {e}"))),
    }
}

/// Free-text model: draft generators and the feedback writer.
pub trait TextModel: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, task: TaskId, system: &str, user: &str) -> Result<String, TransportError>;
}

/// A [`TextModel`] backed by any [`ChatBackend`].
pub struct ChatTextModel {
    name: String,
    backend: Arc<dyn ChatBackend>,
    temperature: Option<f64>,
    retry: RetryPolicy,
}

impl ChatTextModel {
    pub fn new(name: impl Into<String>, backend: Arc<dyn ChatBackend>, temperature: Option<f64>, retry: RetryPolicy) -> Self {
        Self {
            name: name.into(),
            backend,
            temperature,
            retry,
        }
    }
}

impl TextModel for ChatTextModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, task: TaskId, system: &str, user: &str) -> Result<String, TransportError> {
        let request = ChatRequest {
            task,
            system: system.to_string(),
            user: user.to_string(),
            temperature: self.temperature,
            structured: false,
            sample: 0,
        };
        self.retry.run(|| self.backend.complete(&request))
    }
}
