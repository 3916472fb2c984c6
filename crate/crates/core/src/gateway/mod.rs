//! Uniform chat-completion interface.
//!
//! A [`Gateway`] wraps one [`ChatProvider`] and adds request validation,
//! the character budget, retries with jittered exponential backoff, shared
//! rate limiting, a bound on in-flight requests, and a JSON-lines log of
//! every attempt.

mod http;
mod log;
mod mock;

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::http::{HttpChatProvider, LLM_ENDPOINT_ENV, LLM_KEY_ENV, LLM_MODEL_ENV};
pub use self::log::{LogRecord, RunLog};
pub use self::mock::{mock_complete, mock_reply, MockProvider, RuleEntry};

use crate::seed::stream_rng;
use crate::support::{sha256_hex, Semaphore, Sleeper, ThreadSleeper, TokenBucket};

/// Requests whose combined message length exceeds this are rejected.
pub const DEFAULT_CHAR_BUDGET: usize = 60_000;
pub const DEFAULT_CONCURRENCY: usize = 4;

/// Stage names used as the prefix of [`ChatRequest::request_tag`].
pub mod stage {
    pub const REFLECT: &str = "reflect";
    pub const REFLECT_CHUNK: &str = "reflect-chunk";
    pub const REFLECT_FINAL: &str = "reflect-final";
    pub const SURVEY: &str = "survey";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    /// `<stage>:<agent id>`, used for logs and by the mock provider.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn total_chars(&self) -> usize {
        self.messages
            .iter()
            .map(|m| m.content.chars().count())
            .sum()
    }

    /// All message contents joined by newlines.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn stage(&self) -> &str {
        self.request_tag.split(':').next().unwrap_or("")
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(
            serde_json::to_vec(&(&self.model_name, &self.messages, self.temperature))
                .expect("serializable"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub provider: String,
    pub latency_ms: f64,
    pub attempt: u32,
}

/// Failure of a single provider call.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderError {
    /// Network trouble or a server-side error; worth retrying.
    Transport(String),
    RateLimited {
        retry_after: Option<Duration>,
    },
    /// The server refused the request; retrying will not help.
    Rejected {
        status: u16,
        body: String,
    },
    /// The run is shutting down.
    Cancelled,
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderError::Transport(m) => write!(f, "transport error: {m}"),
            ProviderError::RateLimited { retry_after } => {
                write!(f, "rate limited (retry after {retry_after:?})")
            }
            ProviderError::Rejected { status, body } => {
                write!(f, "rejected with HTTP {status}: {body}")
            }
            ProviderError::Cancelled => f.write_str("cancelled"),
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("request `{tag}` has {chars} characters, over the {budget} character budget")]
    OverBudget {
        tag: String,
        chars: usize,
        budget: usize,
    },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned empty completions after {attempts} attempts")]
    EmptyCompletion { attempts: u32 },
    #[error("provider kept rate limiting after {waits} waits")]
    RateLimited { waits: u32 },
    #[error("provider rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("request cancelled")]
    Cancelled,
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts allowed for transport failures.
    pub max_attempts: u32,
    pub base_delay: Duration,
    /// Relative jitter applied to each delay, e.g. 0.2 for +/-20%.
    pub jitter: f64,
    pub empty_retries: u32,
    pub max_rate_limit_waits: u32,
    pub default_rate_limit_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            jitter: 0.2,
            empty_retries: 1,
            max_rate_limit_waits: 10,
            default_rate_limit_wait: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before the retry that follows the `failures`-th transport
    /// failure, without jitter: 1 s, 2 s, 4 s, ...
    pub fn nominal_delay(&self, failures: u32) -> Duration {
        let exp = failures.saturating_sub(1).min(16);
        self.base_delay.saturating_mul(1u32 << exp)
    }
}

pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    policy: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    limiter: Option<Arc<TokenBucket>>,
    permits: Semaphore,
    log: Option<Arc<RunLog>>,
    jitter_rng: Mutex<ChaCha8Rng>,
    char_budget: usize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Gateway {
            provider,
            policy: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            limiter: None,
            permits: Semaphore::new(DEFAULT_CONCURRENCY),
            log: None,
            jitter_rng: Mutex::new(stream_rng(0, "jitter")),
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_rate_limiter(mut self, limiter: Arc<TokenBucket>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_concurrency(mut self, in_flight: usize) -> Self {
        self.permits = Semaphore::new(in_flight);
        self
    }

    pub fn with_log(mut self, log: Arc<RunLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn with_seed(self, seed: u64) -> Self {
        *self.jitter_rng.lock().unwrap() = stream_rng(seed, "jitter");
        self
    }

    pub fn with_char_budget(mut self, budget: usize) -> Self {
        self.char_budget = budget;
        self
    }

    pub fn char_budget(&self) -> usize {
        self.char_budget
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    fn validate(&self, request: &ChatRequest) -> Result<(), GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if request.messages.iter().any(|m| m.content.trim().is_empty()) {
            return Err(GatewayError::InvalidRequest("empty message content".into()));
        }
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                request.temperature
            )));
        }
        let chars = request.total_chars();
        if chars > self.char_budget {
            return Err(GatewayError::OverBudget {
                tag: request.request_tag.clone(),
                chars,
                budget: self.char_budget,
            });
        }
        Ok(())
    }

    fn jittered(&self, nominal: Duration) -> Duration {
        let j = self.policy.jitter;
        if j <= 0.0 {
            return nominal;
        }
        let factor = self.jitter_rng.lock().unwrap().gen_range(1.0 - j..=1.0 + j);
        nominal.mul_f64(factor)
    }

    fn record(
        &self,
        request: &ChatRequest,
        attempt: u32,
        latency: Duration,
        outcome: &Result<String, ProviderError>,
    ) {
        let Some(log) = &self.log else { return };
        let (status, detail, response_hash) = match outcome {
            Ok(c) if c.trim().is_empty() => ("empty", None, Some(sha256_hex(c))),
            Ok(c) => ("ok", None, Some(sha256_hex(c))),
            Err(e) => ("error", Some(e.to_string()), None),
        };
        let record = LogRecord {
            timestamp: chrono::Utc::now().to_rfc3339(),
            request_tag: request.request_tag.clone(),
            provider: self.provider.name().to_string(),
            attempt,
            status: status.to_string(),
            error: detail,
            request_hash: request.content_hash(),
            response_hash,
            latency_ms: latency.as_secs_f64() * 1000.0,
        };
        if let Err(e) = log.append(&record) {
            ::log::error!("could not append to run log: {e}");
        }
    }

    /// Sends `request`, retrying per the policy, and returns the first
    /// non-empty completion.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.validate(request)?;
        let mut attempt = 0u32;
        let mut transport_failures = 0u32;
        let mut empties = 0u32;
        let mut waits = 0u32;
        loop {
            attempt += 1;
            let started = Instant::now();
            let outcome = {
                let _permit = self.permits.acquire();
                if let Some(limiter) = &self.limiter {
                    limiter.acquire();
                }
                self.provider.send(request)
            };
            let latency = started.elapsed();
            self.record(request, attempt, latency, &outcome);
            match outcome {
                Ok(content) if !content.trim().is_empty() => {
                    return Ok(ChatResponse {
                        content,
                        provider: self.provider.name().to_string(),
                        latency_ms: latency.as_secs_f64() * 1000.0,
                        attempt,
                    });
                }
                Ok(_) => {
                    empties += 1;
                    if empties > self.policy.empty_retries {
                        return Err(GatewayError::EmptyCompletion { attempts: attempt });
                    }
                }
                Err(ProviderError::Transport(message)) => {
                    transport_failures += 1;
                    if transport_failures >= self.policy.max_attempts {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    ::log::warn!(
                        "{}: attempt {attempt} failed: {message}",
                        request.request_tag
                    );
                    self.sleeper
                        .sleep(self.jittered(self.policy.nominal_delay(transport_failures)));
                }
                Err(ProviderError::RateLimited { retry_after }) => {
                    waits += 1;
                    if waits > self.policy.max_rate_limit_waits {
                        return Err(GatewayError::RateLimited { waits: waits - 1 });
                    }
                    self.sleeper
                        .sleep(retry_after.unwrap_or(self.policy.default_rate_limit_wait));
                }
                Err(ProviderError::Rejected { status, body }) => {
                    return Err(GatewayError::Rejected { status, body });
                }
                Err(ProviderError::Cancelled) => return Err(GatewayError::Cancelled),
            }
        }
    }
}
