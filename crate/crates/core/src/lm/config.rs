use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Backend selection as it appears in the `[backend]` table of a run config.
///
/// ```toml
/// [backend]
/// kind = "http"
/// base_url = "http://localhost:8000/v1"
/// model = "gpt2"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock { rules: PathBuf },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; requests go to `{base_url}/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset variable means no auth header.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Total attempts per request.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First backoff delay; doubled after each failed attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Whether the endpoint can generate free text (word-matching verbalizers).
    #[serde(default = "default_true")]
    pub generation: bool,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_api_key_env(),
            max_in_flight: default_max_in_flight(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            generation: true,
        }
    }
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_true() -> bool {
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_defaults() {
        let cfg: BackendConfig =
            toml::from_str("kind = \"http\"\nbase_url = \"http://x/v1\"\nmodel = \"gpt2\"\n").unwrap();
        assert_eq!(cfg, BackendConfig::Http(HttpConfig::new("http://x/v1", "gpt2")));
        let BackendConfig::Http(h) = cfg else { unreachable!() };
        assert_eq!((h.retries, h.backoff_ms, h.max_in_flight), (3, 500, 4));
    }

    #[test]
    fn mock_config() {
        let cfg: BackendConfig = toml::from_str("kind = \"mock\"\nrules = \"rules.json\"\n").unwrap();
        assert_eq!(cfg, BackendConfig::Mock { rules: "rules.json".into() });
    }
}
