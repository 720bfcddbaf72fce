//! Chat-completion backends.
//!
//! A backend turns one rendered prompt into one text answer. The hosted
//! backends speak HTTP; [`MockBackend`] answers from a script so pipeline
//! runs are reproducible.

mod gemini;
mod mock;
mod openai;

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gemini::GeminiBackend;
pub use mock::{MockBackend, MockScript};
pub use openai::OpenAiCompatibleBackend;

use crate::prompts::TaskOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendId {
    #[serde(rename = "gemini-2.0-flash")]
    Gemini20Flash,
    #[serde(rename = "llama-3.3-70b-versatile")]
    Llama33_70bVersatile,
    #[serde(rename = "mock")]
    Mock,
}

impl BackendId {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendId::Gemini20Flash => "gemini-2.0-flash",
            BackendId::Llama33_70bVersatile => "llama-3.3-70b-versatile",
            BackendId::Mock => "mock",
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Key of the task being run; only scripted backends look at it.
    pub task: String,
    pub output: TaskOutput,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend not configured: {0}")]
    Config(String),
    /// Timeouts, dropped connections, 429 and 5xx answers.
    #[error("transient backend failure{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transient { status: Option<u16>, message: String },
    #[error("backend rejected the request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("unexpected backend response: {0}")]
    Malformed(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient { .. })
    }

    pub(crate) fn from_status(status: u16, body: String) -> Self {
        if status == 408 || status == 429 || status >= 500 {
            BackendError::Transient {
                status: Some(status),
                message: body,
            }
        } else {
            BackendError::Rejected {
                status,
                message: body,
            }
        }
    }

    pub(crate) fn from_reqwest(e: reqwest::Error) -> Self {
        if e.is_timeout() || e.is_connect() || e.is_request() {
            BackendError::Transient {
                status: None,
                message: e.to_string(),
            }
        } else {
            BackendError::Malformed(e.to_string())
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> BackendId;

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// Bounded retries with exponential backoff for transient failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * self.multiplier.saturating_pow(retry)
    }
}

/// A completed call with the number of attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub response: ChatResponse,
    pub attempts: u32,
}

pub async fn complete_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: RetryPolicy,
) -> Result<Completion, BackendError> {
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(request).await {
            Ok(response) => {
                return Ok(Completion {
                    response,
                    attempts: attempt,
                })
            }
            Err(e) if e.is_retryable() && attempt < max_attempts => {
                let delay = policy.backoff(attempt - 1);
                tracing::warn!(
                    backend = %backend.id(),
                    task = %request.task,
                    attempt,
                    ?delay,
                    error = %e,
                    "retrying chat completion"
                );
                tokio::time::sleep(delay).await;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Endpoint and credential for a hosted backend.
#[derive(Clone, PartialEq, Eq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("timeout", &self.timeout)
            .finish()
    }
}

pub const GROQ_DEFAULT_BASE_URL: &str = "https://api.groq.com/openai/v1";
pub const GEMINI_DEFAULT_BASE_URL: &str = "https://generativelanguage.googleapis.com/v1beta";

/// Builds a hosted backend from environment-style variables:
/// `GROQ_API_KEY` / `GROQ_BASE_URL` for LLaMA, `GEMINI_API_KEY` /
/// `GEMINI_BASE_URL` for Gemini.
pub fn backend_from_env(
    id: BackendId,
    lookup: impl Fn(&str) -> Option<String>,
    timeout: Duration,
) -> Result<Box<dyn ChatBackend>, BackendError> {
    let endpoint = |key_var: &str, url_var: &str, default_url: &str| {
        let api_key = lookup(key_var)
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("{key_var} is not set")))?;
        Ok::<_, BackendError>(EndpointConfig {
            base_url: lookup(url_var).unwrap_or_else(|| default_url.to_string()),
            api_key,
            timeout,
        })
    };
    match id {
        BackendId::Llama33_70bVersatile => Ok(Box::new(OpenAiCompatibleBackend::new(
            id,
            endpoint("GROQ_API_KEY", "GROQ_BASE_URL", GROQ_DEFAULT_BASE_URL)?,
        ))),
        BackendId::Gemini20Flash => Ok(Box::new(GeminiBackend::new(endpoint(
            "GEMINI_API_KEY",
            "GEMINI_BASE_URL",
            GEMINI_DEFAULT_BASE_URL,
        )?))),
        BackendId::Mock => Ok(Box::new(MockBackend::heuristic(0))),
    }
}
