//! Chat-completion driver: an HTTP backend speaking the common
//! `/chat/completions` JSON protocol, a scriptable stub backend, a
//! content-addressed disk cache and a bounded worker pool that returns
//! records in input order.

mod backend;
mod cache;
mod runner;

pub use backend::{
    Backend, ChatMessage, ChatRequest, HttpBackend, Reply, RequestFailure, StubBackend, StubReply,
    SYSTEM_PROMPT,
};
pub use cache::{CacheKeyPreimage, ResponseCache};
pub use runner::{
    complete, run_eval, Completion, EndpointConfig, InferenceError, PredictionRecord,
};
