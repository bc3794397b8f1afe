//! Uniform interface to chat-completion and embedding backends.
//!
//! The [`ChatBackend`] trait abstracts the transport; [`replay::ReplayBackend`]
//! makes whole agent runs deterministic for tests, and [`http::HttpChatBackend`]
//! speaks a generic JSON chat-completions shape for live runs. Token counts
//! always come from backend-reported usage; when a backend reports none, the
//! exchange's cost is recorded as unknown rather than estimated.

mod embed;
mod http;
mod replay;

pub use embed::{Embedder, HashEmbedder};
pub use http::{HttpAdapter, HttpChatBackend};
pub use replay::{ReplayBackend, ReplayEntry};

use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request exceeds the model context window")]
    ContextOverflow,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("replay script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("embedding dims inconsistent: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    /// Only plain transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

/// Pricing and context-size facts about one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub input_cost_per_1k_tokens: Decimal,
    pub output_cost_per_1k_tokens: Decimal,
    pub max_context_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
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
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// One request/response pair with usage and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: Vec<ChatMessage>,
    pub response: String,
    pub usage: Option<Usage>,
    /// None when the backend reported no usage; never locally estimated.
    pub cost_usd: Option<Decimal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        // temperature 0 wherever the backend honors it
        DecodeParams {
            temperature: 0.0,
            seed: None,
            max_tokens: None,
        }
    }
}

/// Raw backend reply before cost accounting.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub usage: Option<Usage>,
}

/// A chat-completion transport. Implementations must be shareable across
/// threads; each agent run calls sequentially.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &DecodeParams,
    ) -> Result<BackendResponse, GatewayError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

/// Exact decimal cost of an exchange under a profile's per-1k-token rates.
pub fn compute_cost(profile: &ModelProfile, usage: Usage) -> Decimal {
    let thousand = Decimal::from(1000u64);
    Decimal::from(usage.input_tokens) / thousand * profile.input_cost_per_1k_tokens
        + Decimal::from(usage.output_tokens) / thousand * profile.output_cost_per_1k_tokens
}

/// Send one chat request, retrying transient transport failures with bounded
/// exponential backoff. Only the successful attempt is cost-accounted.
pub fn chat(
    profile: &ModelProfile,
    backend: &dyn ChatBackend,
    messages: &[ChatMessage],
    params: &DecodeParams,
) -> Result<ChatExchange, GatewayError> {
    chat_with_policy(profile, backend, messages, params, &RetryPolicy::default())
}

pub fn chat_with_policy(
    profile: &ModelProfile,
    backend: &dyn ChatBackend,
    messages: &[ChatMessage],
    params: &DecodeParams,
    policy: &RetryPolicy,
) -> Result<ChatExchange, GatewayError> {
    if messages.is_empty() {
        return Err(GatewayError::InvalidRequest("empty message list".into()));
    }
    if !matches!(messages[0].role, Role::System | Role::User) {
        return Err(GatewayError::InvalidRequest(
            "first message must be system or user".into(),
        ));
    }
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(messages, params) {
            Ok(resp) => {
                let cost_usd = resp.usage.map(|u| compute_cost(profile, u));
                return Ok(ChatExchange {
                    request: messages.to_vec(),
                    response: resp.text,
                    usage: resp.usage,
                    cost_usd,
                });
            }
            Err(e) if e.is_retryable() && attempt < policy.max_attempts => {
                let delay = policy.base_delay * 2u32.pow(attempt - 1);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Embedding output with its declared dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Cosine similarity. Callers must reject zero vectors at ingest.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na: f64 = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}
