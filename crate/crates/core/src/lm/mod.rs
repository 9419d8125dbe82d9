//! Language-model backends that return next-token probabilities for a fixed set of candidate
//! continuations, plus free-text completion for word-matching verbalizers.
//!
//! Three implementations share the [`LmBackend`] trait:
//!
//! * [`MockBackend`]: rule-driven and deterministic, used for tests and offline runs.
//! * [`HttpBackend`]: an OpenAI-compatible `/completions` endpoint with `logprobs`.
//! * [`CachedBackend`]: wraps another backend and serves repeated queries from memory.

mod cache;
mod config;
mod http;
mod mock;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedBackend;
pub use config::{BackendConfig, HttpConfig};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("transport error (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("candidate token {token:?} is not a single continuation token for this backend")]
    DegradedToken { token: String },
    #[error("backend cannot {0}")]
    Capability(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenProbQuery {
    pub prompt_text: String,
    pub candidate_tokens: Vec<String>,
}

impl TokenProbQuery {
    pub fn new(
        prompt_text: impl Into<String>,
        candidate_tokens: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, LmError> {
        let q = Self {
            prompt_text: prompt_text.into(),
            candidate_tokens: candidate_tokens.into_iter().map(Into::into).collect(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.candidate_tokens.is_empty() {
            return Err(LmError::InvalidQuery("no candidate tokens".into()));
        }
        for (i, t) in self.candidate_tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(LmError::InvalidQuery(format!("candidate {i} is empty")));
            }
            if self.candidate_tokens[..i].contains(t) {
                return Err(LmError::InvalidQuery(format!("duplicate candidate {t:?}")));
            }
        }
        Ok(())
    }
}

/// Probabilities aligned with the query's candidate tokens. They are marginals of the full
/// vocabulary and need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProbResult {
    pub probs: Vec<f64>,
    pub backend_id: String,
}

pub trait LmBackend: Send + Sync {
    /// Identity recorded in feature-matrix provenance, e.g. `mock:rules.json`.
    fn backend_id(&self) -> String;

    fn model_name(&self) -> String;

    fn query_token_probs(&self, q: &TokenProbQuery) -> Result<TokenProbResult, LmError>;

    fn complete_text(&self, prompt_text: &str, max_tokens: usize) -> Result<String, LmError>;

    /// Number of real backend invocations so far. Never decreases.
    fn call_count(&self) -> u64;

    /// How many queries the backend accepts concurrently.
    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<B: LmBackend + ?Sized> LmBackend for Arc<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn model_name(&self) -> String {
        (**self).model_name()
    }
    fn query_token_probs(&self, q: &TokenProbQuery) -> Result<TokenProbResult, LmError> {
        (**self).query_token_probs(q)
    }
    fn complete_text(&self, prompt_text: &str, max_tokens: usize) -> Result<String, LmError> {
        (**self).complete_text(prompt_text, max_tokens)
    }
    fn call_count(&self) -> u64 {
        (**self).call_count()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<B: LmBackend + ?Sized> LmBackend for Box<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn model_name(&self) -> String {
        (**self).model_name()
    }
    fn query_token_probs(&self, q: &TokenProbQuery) -> Result<TokenProbResult, LmError> {
        (**self).query_token_probs(q)
    }
    fn complete_text(&self, prompt_text: &str, max_tokens: usize) -> Result<String, LmError> {
        (**self).complete_text(prompt_text, max_tokens)
    }
    fn call_count(&self) -> u64 {
        (**self).call_count()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

/// Softmax restricted to the given logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Build the backend described by `cfg`, resolving relative paths against `base_dir`.
pub fn open_backend(cfg: &BackendConfig, base_dir: &Path) -> Result<Box<dyn LmBackend>, LmError> {
    match cfg {
        BackendConfig::Mock { rules } => {
            let path = base_dir.join(rules);
            Ok(Box::new(MockBackend::from_file(&path)?))
        }
        BackendConfig::Http(http) => Ok(Box::new(HttpBackend::new(http.clone())?)),
    }
}
