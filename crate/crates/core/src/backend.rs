//! Chat-completion backends: an OpenAI-compatible HTTP client, a scripted
//! mock for hermetic runs, and a closure adapter for tests.

use std::collections::VecDeque;
use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Backend name plus model name, e.g. `openai/llama-3.1-70b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackendId {
    pub backend: String,
    pub model: String,
}

impl BackendId {
    pub fn new(backend: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            backend: backend.into(),
            model: model.into(),
        }
    }
}

impl std::fmt::Display for BackendId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.backend, self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Decoding {
    /// Persona generation default: sample at temperature 1.0.
    pub const GENERATION: Decoding = Decoding { temperature: 1.0, max_tokens: Some(2048) };
    /// Opinion simulation default: greedy decoding.
    pub const SIMULATION: Decoding = Decoding { temperature: 0.0, max_tokens: Some(16) };
}

#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub system: Option<&'a str>,
    pub user: &'a str,
    pub decoding: Decoding,
}

/// A stateless chat-completion endpoint. Implementations must accept
/// concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &BackendId;
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError>;
}

/// Wraps a closure as a backend.
pub struct FnBackend<F> {
    id: BackendId,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest<'_>) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(id: BackendId, f: F) -> Self {
        Self { id, f }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest<'_>) -> Result<String, BackendError> + Send + Sync,
{
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        (self.f)(request)
    }
}

/// One line of a mock script.
///
/// Entries with `when`/`when_all` are stateless rules: the first rule whose
/// substrings all occur in the prompt answers it. Entries without conditions
/// form a queue consumed in order (optionally `repeat`ed). An entry carries
/// either a `response` or an `error` to simulate a transport failure.
///
/// Responses may contain `{{KEY}}` placeholders, filled from the first
/// `"KEY": "value"` pair found in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when_all: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<usize>,
}

impl ScriptEntry {
    pub fn reply(text: impl Into<String>) -> Self {
        Self {
            when: None,
            when_all: Vec::new(),
            response: Some(text.into()),
            error: None,
            repeat: None,
        }
    }

    pub fn rule(when: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            when: Some(when.into()),
            ..Self::reply(text)
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            response: None,
            error: Some(message.into()),
            ..Self::reply("")
        }
    }

    fn is_rule(&self) -> bool {
        self.when.is_some() || !self.when_all.is_empty()
    }

    fn matches(&self, prompt: &str) -> bool {
        self.when.iter().chain(&self.when_all).all(|s| prompt.contains(s.as_str()))
    }
}

/// Deterministic stand-in for a chat endpoint, replaying a script.
pub struct ScriptedBackend {
    id: BackendId,
    rules: Vec<ScriptEntry>,
    queue: Mutex<VecDeque<ScriptEntry>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(id: BackendId, entries: Vec<ScriptEntry>) -> Self {
        let (rules, queued): (Vec<_>, Vec<_>) = entries.into_iter().partition(ScriptEntry::is_rule);
        let mut queue = VecDeque::new();
        for e in queued {
            for _ in 0..e.repeat.unwrap_or(1) {
                queue.push_back(e.clone());
            }
        }
        Self {
            id,
            rules,
            queue: Mutex::new(queue),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Queue of plain responses.
    pub fn from_responses<I, S>(id: BackendId, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(id, responses.into_iter().map(ScriptEntry::reply).collect())
    }

    pub fn load(id: BackendId, path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| BackendError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if entry.response.is_none() == entry.error.is_none() {
                return Err(BackendError::Config(format!(
                    "{}:{}: entry needs exactly one of response or error",
                    path.display(),
                    i + 1
                )));
            }
            entries.push(entry);
        }
        Ok(Self::new(id, entries))
    }

    /// Number of queued entries not yet consumed.
    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// User texts of every call so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.user.to_string());
        let prompt = match request.system {
            Some(s) => format!("{s}\n{}", request.user),
            None => request.user.to_string(),
        };
        let entry = match self.rules.iter().find(|r| r.matches(&prompt)) {
            Some(rule) => rule.clone(),
            None => self
                .queue
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .pop_front()
                .ok_or(BackendError::ScriptExhausted)?,
        };
        match (entry.response, entry.error) {
            (_, Some(err)) => Err(BackendError::Scripted(err)),
            (Some(text), None) => Ok(fill_placeholders(&text, &prompt)),
            (None, None) => Err(BackendError::ScriptExhausted),
        }
    }
}

/// Replaces `{{KEY}}` with the value of the first `"KEY": "value"` pair in
/// `prompt`; unknown keys are left as-is.
fn fill_placeholders(text: &str, prompt: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match lookup_pair(prompt, key) {
                    Some(v) => out.push_str(&v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                return out;
            }
        }
    }
    out.push_str(rest);
    out
}

fn lookup_pair(prompt: &str, key: &str) -> Option<String> {
    let needle = format!("\"{key}\": \"");
    let start = prompt.find(&needle)? + needle.len();
    let rest = &prompt[start..];
    let mut value = String::new();
    let mut chars = rest.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => return Some(value),
            '\\' => value.push(chars.next()?),
            c => value.push(c),
        }
    }
    None
}

/// Settings for an OpenAI-compatible chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL (`https://host/v1`) or the full `/chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts on HTTP 429 / 5xx / connection errors.
    #[serde(default = "default_http_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
}

fn default_timeout() -> u64 {
    120
}

fn default_http_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout_secs: default_timeout(),
            max_retries: default_http_retries(),
            initial_backoff_ms: default_backoff(),
        }
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Debug, Deserialize)]
struct WireReply {
    #[serde(default)]
    content: Option<String>,
}

/// Builds the JSON body sent to the completions endpoint.
pub fn wire_request_body(model: &str, request: &ChatRequest<'_>) -> serde_json::Value {
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = request.system {
        messages.push(WireMessage { role: "system", content: system });
    }
    messages.push(WireMessage { role: "user", content: request.user });
    serde_json::to_value(WireRequest {
        model,
        messages,
        temperature: request.decoding.temperature,
        max_tokens: request.decoding.max_tokens,
    })
    .expect("request serializes")
}

/// Extracts the first choice's message content from a completion response.
pub fn parse_wire_response(body: &str) -> Result<String, BackendError> {
    let parsed: WireResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Protocol("no choices[0].message.content".into()))
}

/// OpenAI-compatible chat-completion client with backoff on rate limits and
/// server errors.
pub struct HttpChatBackend {
    id: BackendId,
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(name: impl Into<String>, config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self {
            id: BackendId::new(name, config.model.clone()),
            config,
            agent,
        }
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<String, (BackendError, Option<Duration>)> {
        let mut req = self.agent.post(&self.config.completions_url());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (BackendError::Transport(e.to_string()), None))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (BackendError::Transport(e.to_string()), None))?;
        if !(200..300).contains(&status) {
            return Err((BackendError::Status { status, body: truncate(&text, 512) }, retry_after));
        }
        parse_wire_response(&text).map_err(|e| (e, None))
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => s[..i].to_string(),
        None => s.to_string(),
    }
}

fn is_retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Transport(_) => true,
        BackendError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let body = wire_request_body(&self.config.model, request);
        let mut delay = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err((e, retry_after)) => {
                    if attempt >= self.config.max_retries || !is_retryable(&e) {
                        return Err(e);
                    }
                    std::thread::sleep(retry_after.unwrap_or(delay));
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }
}
