use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::limiter::Limiter;
use super::{
    request_digest, BackendError, Cassette, CassetteRecord, ChatBackend, CompletionRequest, CompletionResponse,
    LlmError, RateLimit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientMode {
    Live,
    Record,
    Replay,
}

/// Exponential backoff for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO, multiplier: 1.0 }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry.saturating_sub(1) as i32);
        self.base_delay.mul_f64(factor).min(self.max_delay)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Chat-completion client. Safe to share across threads.
pub struct LlmClient {
    mode: ClientMode,
    backend: Option<Arc<dyn ChatBackend>>,
    cassette: Option<Arc<Cassette>>,
    retry: RetryPolicy,
    limiter: Limiter,
    completions: AtomicU64,
    backend_calls: AtomicU64,
}

impl LlmClient {
    pub fn live(backend: Arc<dyn ChatBackend>) -> Self {
        Self::build(ClientMode::Live, Some(backend), None)
    }

    pub fn record(backend: Arc<dyn ChatBackend>, cassette: Arc<Cassette>) -> Self {
        Self::build(ClientMode::Record, Some(backend), Some(cassette))
    }

    /// Replay never holds a backend, so it cannot reach the network.
    pub fn replay(cassette: Arc<Cassette>) -> Self {
        Self::build(ClientMode::Replay, None, Some(cassette))
    }

    fn build(mode: ClientMode, backend: Option<Arc<dyn ChatBackend>>, cassette: Option<Arc<Cassette>>) -> Self {
        Self {
            mode,
            backend,
            cassette,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(RateLimit::default()),
            completions: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, rate: RateLimit) -> Self {
        self.limiter = Limiter::new(rate);
        self
    }

    pub fn mode(&self) -> ClientMode {
        self.mode
    }

    pub fn cassette(&self) -> Option<&Cassette> {
        self.cassette.as_deref()
    }

    /// Completions answered so far, from any source.
    pub fn completions(&self) -> u64 {
        self.completions.load(Ordering::SeqCst)
    }

    /// Requests actually sent to the backend, counting retries.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.validate()?;
        let resp = match self.mode {
            ClientMode::Replay => {
                let digest = request_digest(request);
                self.cassette
                    .as_ref()
                    .and_then(|c| c.get(&digest))
                    .ok_or(LlmError::CassetteMiss { digest })?
            }
            ClientMode::Record => {
                let digest = request_digest(request);
                let cassette = self.cassette.as_ref().ok_or(LlmError::NoBackend(self.mode))?;
                match cassette.get(&digest) {
                    Some(hit) => hit,
                    None => {
                        let mut resp = self.call_backend(request)?;
                        let latency_ms = resp.latency.as_millis() as u64;
                        cassette.append(CassetteRecord::new(request, resp.text.clone(), latency_ms))?;
                        // Report what a replay of this record will report.
                        resp.latency = Duration::from_millis(latency_ms);
                        resp
                    }
                }
            }
            ClientMode::Live => self.call_backend(request)?,
        };
        self.completions.fetch_add(1, Ordering::SeqCst);
        Ok(resp)
    }

    fn call_backend(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let backend = self.backend.as_ref().ok_or(LlmError::NoBackend(self.mode))?;
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            let started = Instant::now();
            let result = {
                let _permit = self.limiter.acquire();
                self.backend_calls.fetch_add(1, Ordering::SeqCst);
                backend.send(request)
            };
            match result {
                Ok(reply) => {
                    return Ok(CompletionResponse {
                        text: reply.text,
                        backend_metadata: reply.metadata,
                        latency: started.elapsed(),
                    })
                }
                Err(BackendError::Fatal { status, body }) => return Err(LlmError::Backend { status, body }),
                Err(BackendError::Transient(msg)) => {
                    log::warn!("attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                }
            }
        }
        Err(LlmError::TransportExhausted { attempts, last })
    }
}
