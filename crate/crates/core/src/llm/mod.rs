//! Backend-agnostic chat-completion client.
//!
//! A [`LlmClient`] runs in one of three modes:
//!
//! * `Live` sends every request to the backend.
//! * `Record` serves hits from the cassette and appends misses after a live call.
//! * `Replay` answers only from the cassette and never touches the network.
//!
//! Cassette entries are keyed by [`request_digest`].

mod backend;
mod cassette;
mod client;
mod digest;
mod limiter;

pub use backend::{BackendError, BackendFamily, BackendReply, ChatBackend, HttpBackend, API_KEY_ENV};
pub use cassette::{Cassette, CassetteRecord, RecordedRequest, RecordedResponse};
pub use client::{ClientMode, LlmClient, RetryPolicy};
pub use digest::{canonical_bytes, request_digest};
pub use limiter::RateLimit;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.user_text.is_empty() {
            return Err(LlmError::InvalidRequest("user_text is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_metadata: BTreeMap<String, serde_json::Value>,
    pub latency: Duration,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("cassette miss for request digest {digest}")]
    CassetteMiss { digest: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("backend error{}: {body}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, body: String },
    #[error("client in {0:?} mode has no backend configured")]
    NoBackend(ClientMode),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette {path}: line {line}: {cause}")]
    CassetteFormat { path: String, line: usize, cause: String },
    #[error("cassette i/o: {0}")]
    Io(#[from] std::io::Error),
}
