//! Chat-completions gateway.
//!
//! [`Gateway`] wraps a [`ChatBackend`] (HTTP or the scriptable
//! [`MockBackend`]) with a response cache keyed by [`cache_key`], retries
//! with exponential backoff for transient failures, and a cap on the number
//! of in-flight upstream calls.

mod cache;
#[cfg(feature = "http")]
mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
#[cfg(feature = "http")]
pub use http::{HttpBackend, API_KEY_ENV, ENDPOINT_ENV};
pub use mock::{MockBackend, MockFailure, MockRule, MockScript, MockStats, NamedFailure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// A request with the model family's default sampling temperature.
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        let model = model.into();
        let temperature = default_temperature(&model);
        ChatRequest {
            model,
            messages,
            temperature,
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        if self.model.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model name is empty".into()));
        }
        Ok(())
    }

    /// All message contents joined by newlines; what mock rules match against.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Greedy decoding where the endpoint accepts it. The o-series reasoning
/// models reject a temperature parameter, so none is sent for them.
pub fn default_temperature(model: &str) -> Option<f64> {
    let reasoning = model
        .strip_prefix('o')
        .and_then(|rest| rest.chars().next())
        .is_some_and(|c| c.is_ascii_digit());
    if reasoning {
        None
    } else {
        Some(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub digest: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    /// Unix time in milliseconds when the response was received.
    pub timestamp: u64,
}

/// Stable SHA-256 over the model, ordered messages and sampling parameters.
pub fn cache_key(request: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        model: &'a str,
        messages: Vec<(Role, &'a str)>,
        temperature: Option<f64>,
        max_tokens: Option<u32>,
    }
    let canonical = Canonical {
        model: &request.model,
        messages: request.messages.iter().map(|m| (m.role, m.content.as_str())).collect(),
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            TransportError::Timeout | TransportError::Connection(_) => true,
            TransportError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("gave up after {attempts} attempts: {last}")]
    RateLimitedExhausted { attempts: u32, last: TransportError },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("upstream rejected request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// Exponential backoff with multiplicative jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    /// Relative jitter; 0.2 spreads each delay over ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    /// Delay before retry number `retry` (1-based), with `unit` drawn from
    /// `[-1, 1]` selecting the jitter.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * self.factor.powi(retry.saturating_sub(1) as i32);
        let scaled = nominal * (1.0 + self.jitter * unit.clamp(-1.0, 1.0));
        Duration::from_secs_f64(scaled.max(0.0))
    }
}

/// Counting semaphore bounding in-flight upstream calls.
struct Limiter {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.permits.lock().unwrap();
        while *free == 0 {
            free = self.freed.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    /// Upstream attempts, including retries.
    pub network_attempts: u64,
    pub cache_hits: u64,
    pub completions: u64,
}

/// Outcome of [`Gateway::complete`].
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub exchange: ChatExchange,
    /// Upstream attempts spent; 0 for a cache hit.
    pub attempts: u32,
    pub from_cache: bool,
}

impl Completion {
    pub fn content(&self) -> &str {
        &self.exchange.response.content
    }

    pub fn digest(&self) -> &str {
        &self.exchange.digest
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: ResponseCache,
    retry: RetryPolicy,
    limiter: Limiter,
    concurrency: usize,
    jitter_rng: Mutex<ChaCha8Rng>,
    network_attempts: AtomicU64,
    cache_hits: AtomicU64,
    completions: AtomicU64,
}

/// Something that can answer a chat request once, without retries.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;

    /// Short description recorded in run manifests.
    fn describe(&self) -> String;
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Gateway {
            backend,
            cache: ResponseCache::in_memory(),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(4),
            concurrency: 4,
            jitter_rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            network_attempts: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            completions: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.concurrency = limit.max(1);
        self.limiter = Limiter::new(self.concurrency);
        self
    }

    pub fn with_jitter_seed(self, seed: u64) -> Self {
        *self.jitter_rng.lock().unwrap() = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    pub fn backend_description(&self) -> String {
        self.backend.describe()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            network_attempts: self.network_attempts.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            completions: self.completions.load(Ordering::SeqCst),
        }
    }

    /// Answers from the cache when possible; otherwise calls the backend,
    /// retrying transient failures, and caches the exchange.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let digest = cache_key(request);
        if let Some(exchange) = self.cache.lookup(&digest)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            self.completions.fetch_add(1, Ordering::SeqCst);
            return Ok(Completion {
                exchange,
                attempts: 0,
                from_cache: true,
            });
        }

        let mut attempts = 0;
        let response = loop {
            attempts += 1;
            self.network_attempts.fetch_add(1, Ordering::SeqCst);
            let result = {
                let _permit = self.limiter.acquire();
                let started = Instant::now();
                self.backend.send(request).map(|mut r| {
                    r.latency_ms = started.elapsed().as_millis() as u64;
                    r
                })
            };
            match result {
                Ok(r) => break r,
                Err(e) => self.handle_failure(e, attempts)?,
            }
        };

        let exchange = ChatExchange {
            digest,
            request: request.clone(),
            response,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        self.cache.store(&exchange)?;
        self.completions.fetch_add(1, Ordering::SeqCst);
        Ok(Completion {
            exchange,
            attempts,
            from_cache: false,
        })
    }

    /// Sleeps before the next attempt, or returns the terminal error.
    fn handle_failure(&self, err: TransportError, attempts: u32) -> Result<(), GatewayError> {
        match &err {
            TransportError::Status {
                status: s @ (401 | 403),
                ..
            } => return Err(GatewayError::Auth(*s)),
            TransportError::Malformed(m) => return Err(GatewayError::MalformedResponse(m.clone())),
            TransportError::Status { status, body } if !err.is_transient() => {
                return Err(GatewayError::Rejected {
                    status: *status,
                    body: body.clone(),
                })
            }
            _ => {}
        }
        if attempts >= self.retry.max_attempts {
            return Err(match err {
                TransportError::Timeout => GatewayError::Timeout { attempts },
                last => GatewayError::RateLimitedExhausted { attempts, last },
            });
        }
        let unit = self.jitter_rng.lock().unwrap().random_range(-1.0..=1.0);
        let delay = self.retry.delay(attempts, unit);
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        Ok(())
    }
}
