//! OpenAI-compatible `/completions` client.
//!
//! Candidate probabilities are read with `echo` + `logprobs`: the request sends one prompt per
//! candidate (`prompt_text + candidate`) in a single batched call, and the log-probability of
//! the echoed candidate token is read back. A candidate that the server tokenizes into more
//! than one token, or that merges with the end of the prompt, cannot be scored this way and is
//! reported as [`LmError::DegradedToken`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{HttpConfig, LmBackend, LmError, TokenProbQuery, TokenProbResult};

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            limit: limit.max(1),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("gate poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Logprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    calls: AtomicU64,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LmError::Config(e.to_string()))?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let gate = Gate::new(cfg.max_in_flight);
        Ok(Self {
            cfg,
            client,
            api_key,
            calls: AtomicU64::new(0),
            gate,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn post(&self, body: &serde_json::Value) -> Result<CompletionResponse, LmError> {
        let _permit = self.gate.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let attempts = self.cfg.retries.max(1);
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut last = LmError::Transport {
            status: None,
            message: "no attempt made".into(),
        };
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let mut req = self.client.post(self.endpoint()).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| LmError::Protocol(format!("{e}: {text}")));
                    }
                    last = LmError::Transport {
                        status: Some(status.as_u16()),
                        message: text,
                    };
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    if !retryable {
                        break;
                    }
                    log::warn!("attempt {} failed with status {}", attempt + 1, status);
                }
                Err(e) => {
                    log::warn!("attempt {} failed: {e}", attempt + 1);
                    last = LmError::Transport {
                        status: e.status().map(|s| s.as_u16()),
                        message: e.to_string(),
                    };
                }
            }
        }
        Err(last)
    }
}

/// Probability of `candidate` following `prompt`, given echoed log-probs for `prompt + candidate`.
fn candidate_prob(prompt: &str, candidate: &str, lp: &Logprobs) -> Result<f64, LmError> {
    let start = prompt.chars().count();
    let end = start + candidate.chars().count();
    let degraded = || LmError::DegradedToken {
        token: candidate.to_string(),
    };
    let mut found = None;
    for (i, (&offset, token)) in lp.text_offset.iter().zip(&lp.tokens).enumerate() {
        let token_end = offset + token.chars().count();
        if offset < start && token_end > start {
            // Token straddles the prompt/candidate boundary.
            return Err(degraded());
        }
        if offset >= start && offset < end {
            if found.is_some() || token_end != end {
                return Err(degraded());
            }
            found = Some(i);
        }
    }
    let i = found.ok_or_else(degraded)?;
    let logprob = lp
        .token_logprobs
        .get(i)
        .copied()
        .flatten()
        .ok_or_else(|| LmError::Protocol(format!("missing logprob for {candidate:?}")))?;
    Ok(logprob.exp())
}

impl LmBackend for HttpBackend {
    fn backend_id(&self) -> String {
        format!("http:{}", self.cfg.base_url)
    }

    fn model_name(&self) -> String {
        self.cfg.model.clone()
    }

    fn query_token_probs(&self, q: &TokenProbQuery) -> Result<TokenProbResult, LmError> {
        q.validate()?;
        let prompts: Vec<String> = q
            .candidate_tokens
            .iter()
            .map(|c| format!("{}{}", q.prompt_text, c))
            .collect();
        let body = json!({
            "model": self.cfg.model,
            "prompt": prompts,
            "max_tokens": 1,
            "temperature": 0,
            "echo": true,
            "logprobs": 0,
        });
        let resp = self.post(&body)?;
        if resp.choices.len() != prompts.len() {
            return Err(LmError::Protocol(format!(
                "expected {} choices, got {}",
                prompts.len(),
                resp.choices.len()
            )));
        }
        let mut probs = vec![f64::NAN; prompts.len()];
        for (pos, choice) in resp.choices.iter().enumerate() {
            let idx = choice.index.unwrap_or(pos);
            let candidate = q
                .candidate_tokens
                .get(idx)
                .ok_or_else(|| LmError::Protocol(format!("choice index {idx} out of range")))?;
            let lp = choice
                .logprobs
                .as_ref()
                .ok_or_else(|| LmError::Protocol("response has no logprobs".into()))?;
            probs[idx] = candidate_prob(&q.prompt_text, candidate, lp)?;
        }
        if probs.iter().any(|p| p.is_nan()) {
            return Err(LmError::Protocol("duplicate choice indices".into()));
        }
        Ok(TokenProbResult {
            probs,
            backend_id: self.backend_id(),
        })
    }

    fn complete_text(&self, prompt_text: &str, max_tokens: usize) -> Result<String, LmError> {
        if !self.cfg.generation {
            return Err(LmError::Capability("generate text: generation disabled in config".into()));
        }
        let body = json!({
            "model": self.cfg.model,
            "prompt": prompt_text,
            "max_tokens": max_tokens,
            "temperature": 0,
        });
        let resp = self.post(&body)?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| LmError::Protocol("no choices in completion".into()))
    }

    fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn max_in_flight(&self) -> usize {
        self.gate.limit
    }
}
