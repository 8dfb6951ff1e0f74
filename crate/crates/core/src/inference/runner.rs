use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, ChatMessage, ChatRequest, RequestFailure, SYSTEM_PROMPT};
use super::cache::{CacheKeyPreimage, ResponseCache};
use crate::benchmark::CorpusIndex;
use crate::prompt::{parse_answer, template_id, FormatErrorReason, ParseResult, PromptInstance};

const MAX_BACKOFF_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry_budget: u32,
    /// Base delay before the first retry; doubles on each further attempt.
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "local-model".into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60,
            max_in_flight: 4,
            retry_budget: 3,
            backoff_ms: 500,
            cache_dir: None,
            api_key_env: "DVMAP_API_KEY".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("prompt {0} does not resolve to a corpus sample")]
    UnresolvedSample(String),
    #[error("cache directory {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(InferenceError::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(InferenceError::Config("max_in_flight must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(InferenceError::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn open_cache(&self) -> Result<Option<ResponseCache>, InferenceError> {
        match &self.cache_dir {
            None => Ok(None),
            Some(dir) => {
                ResponseCache::open(dir)
                    .map(Some)
                    .map_err(|source| InferenceError::Cache {
                        path: dir.clone(),
                        source,
                    })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub raw_completion: String,
    pub parse: ParseResult,
    pub latency_ms: u64,
    pub cached: bool,
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RequestFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub cached: bool,
    pub retries: u32,
}

fn chat_request(prompt: &PromptInstance, cfg: &EndpointConfig) -> ChatRequest {
    ChatRequest {
        model: cfg.model.clone(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: SYSTEM_PROMPT.into(),
            },
            ChatMessage {
                role: "user".into(),
                content: prompt.text.clone(),
            },
        ],
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    }
}

/// One prompt through cache, then backend with retries. Cache hits never
/// reach the backend; only successful completions are stored.
pub fn complete(
    prompt: &PromptInstance,
    cfg: &EndpointConfig,
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
) -> Result<Completion, (RequestFailure, u32)> {
    let preimage = CacheKeyPreimage {
        template: template_id(),
        prompt: prompt.text.clone(),
        model: cfg.model.clone(),
        temperature: cfg.temperature,
    };
    if let Some((text, latency_ms)) = cache.and_then(|c| c.get(&preimage)) {
        return Ok(Completion {
            text,
            latency_ms,
            cached: true,
            retries: 0,
        });
    }
    let request = chat_request(prompt, cfg);
    let mut retries = 0u32;
    loop {
        match backend.send(&request) {
            Ok(reply) => {
                if let Some(c) = cache {
                    if let Err(e) = c.put(&preimage, &reply.content, reply.latency_ms) {
                        tracing::warn!(sample_id = %prompt.sample_id, error = %e, "cache write failed");
                    }
                }
                return Ok(Completion {
                    text: reply.content,
                    latency_ms: reply.latency_ms,
                    cached: false,
                    retries,
                });
            }
            Err(failure) if failure.retryable() && retries < cfg.retry_budget => {
                let delay = cfg
                    .backoff_ms
                    .saturating_mul(1u64 << retries.min(16))
                    .min(MAX_BACKOFF_MS);
                retries += 1;
                tracing::warn!(
                    sample_id = %prompt.sample_id,
                    attempt = retries,
                    delay_ms = delay,
                    error = %failure,
                    "retrying request"
                );
                if delay > 0 {
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
            Err(failure) => return Err((failure, retries)),
        }
    }
}

fn record_for(
    prompt: &PromptInstance,
    outcome: Result<Completion, (RequestFailure, u32)>,
) -> PredictionRecord {
    match outcome {
        Ok(c) => PredictionRecord {
            sample_id: prompt.sample_id.clone(),
            parse: parse_answer(&c.text, &prompt.options),
            raw_completion: c.text,
            latency_ms: c.latency_ms,
            cached: c.cached,
            retries: c.retries,
            failure: None,
        },
        Err((failure, retries)) => {
            tracing::error!(sample_id = %prompt.sample_id, error = %failure, "request failed");
            PredictionRecord {
                sample_id: prompt.sample_id.clone(),
                raw_completion: String::new(),
                parse: ParseResult::FormatError {
                    reason: FormatErrorReason::NoTag,
                },
                latency_ms: 0,
                cached: false,
                retries,
                failure: Some(failure),
            }
        }
    }
}

/// Runs every prompt with at most `cfg.max_in_flight` outstanding requests.
/// Records come back in input order.
pub fn run_eval(
    prompts: &[PromptInstance],
    corpus: &CorpusIndex,
    cfg: &EndpointConfig,
    backend: &dyn Backend,
) -> Result<Vec<PredictionRecord>, InferenceError> {
    cfg.validate()?;
    if let Some(p) = prompts.iter().find(|p| corpus.get(&p.sample_id).is_none()) {
        return Err(InferenceError::UnresolvedSample(p.sample_id.clone()));
    }
    let cache = cfg.open_cache()?;
    let slots: Mutex<Vec<Option<PredictionRecord>>> = Mutex::new(vec![None; prompts.len()]);
    let next = AtomicUsize::new(0);
    let workers = cfg.max_in_flight.min(prompts.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(prompt) = prompts.get(i) else { break };
                let record = record_for(prompt, complete(prompt, cfg, backend, cache.as_ref()));
                slots.lock().unwrap()[i] = Some(record);
            });
        }
    });
    let records: Vec<PredictionRecord> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect();
    let unparsed = records.iter().filter(|r| !r.parse.is_ok()).count();
    tracing::info!(records = records.len(), unparsed, "evaluation finished");
    Ok(records)
}
