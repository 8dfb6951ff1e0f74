use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body for `POST {base_url}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub content: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestFailure {
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("endpoint returned status {code}")]
    Status { code: u16, body: String },
    #[error("malformed response body: {message}")]
    Malformed { message: String },
}

impl RequestFailure {
    /// Transport errors, 429 and 5xx are worth another attempt.
    pub fn retryable(&self) -> bool {
        match self {
            RequestFailure::Transport { .. } => true,
            RequestFailure::Status { code, .. } => *code == 429 || *code >= 500,
            RequestFailure::Malformed { .. } => false,
        }
    }
}

pub trait Backend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<Reply, RequestFailure>;
}

/// Blocking HTTP backend.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("url", &self.url)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    /// `token_env` names the environment variable holding the bearer token.
    pub fn new(base_url: &str, timeout: Duration, token_env: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            agent: config.into(),
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            token: std::env::var(token_env).ok().filter(|t| !t.is_empty()),
        }
    }
}

/// Extracts `choices[0].message.content` from a response body.
pub(crate) fn extract_content(body: &str) -> Result<String, RequestFailure> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| RequestFailure::Malformed {
            message: e.to_string(),
        })?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| RequestFailure::Malformed {
            message: "missing choices[0].message.content".into(),
        })
}

impl Backend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<Reply, RequestFailure> {
        let body = serde_json::to_string(request).expect("request serializes");
        let start = Instant::now();
        let mut req = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let response = req
            .send(body.as_str())
            .map_err(|e| RequestFailure::Transport {
                message: e.to_string(),
            })?;
        let code = response.status().as_u16();
        let text =
            response
                .into_body()
                .read_to_string()
                .map_err(|e| RequestFailure::Transport {
                    message: e.to_string(),
                })?;
        if !(200..300).contains(&code) {
            return Err(RequestFailure::Status {
                code,
                body: text.chars().take(512).collect(),
            });
        }
        let content = extract_content(&text)?;
        Ok(Reply {
            content,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubReply {
    Text(String),
    Status(u16),
    Malformed,
}

/// Deterministic offline backend. Lookup order: queued faults, exact prompt
/// matches, substring rules in insertion order, then the default reply.
/// Reports zero latency so records stay byte-stable.
#[derive(Debug)]
pub struct StubBackend {
    exact: HashMap<String, StubReply>,
    rules: Vec<(String, StubReply)>,
    default: StubReply,
    faults: Mutex<VecDeque<u16>>,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl StubBackend {
    pub fn new(default: StubReply) -> Self {
        StubBackend {
            exact: HashMap::new(),
            rules: Vec::new(),
            default,
            faults: Mutex::new(VecDeque::new()),
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        Self::new(StubReply::Text(text.into()))
    }

    pub fn with_exact(mut self, prompt: impl Into<String>, reply: StubReply) -> Self {
        self.exact.insert(prompt.into(), reply);
        self
    }

    pub fn with_rule(mut self, contains: impl Into<String>, reply: StubReply) -> Self {
        self.rules.push((contains.into(), reply));
        self
    }

    /// Statuses returned, in order, by the next calls.
    pub fn with_faults(self, statuses: impl IntoIterator<Item = u16>) -> Self {
        self.faults.lock().unwrap().extend(statuses);
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_observed_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn lookup(&self, prompt: &str) -> StubReply {
        if let Some(code) = self.faults.lock().unwrap().pop_front() {
            return StubReply::Status(code);
        }
        if let Some(r) = self.exact.get(prompt) {
            return r.clone();
        }
        self.rules
            .iter()
            .find(|(needle, _)| prompt.contains(needle.as_str()))
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| self.default.clone())
    }
}

impl Backend for StubBackend {
    fn send(&self, request: &ChatRequest) -> Result<Reply, RequestFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let reply = self.lookup(request.user_content());
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        match reply {
            StubReply::Text(content) => Ok(Reply {
                content,
                latency_ms: 0,
            }),
            StubReply::Status(code) => Err(RequestFailure::Status {
                code,
                body: String::new(),
            }),
            StubReply::Malformed => Err(RequestFailure::Malformed {
                message: "stub scripted malformed body".into(),
            }),
        }
    }
}
