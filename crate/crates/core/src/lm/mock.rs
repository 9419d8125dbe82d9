use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{softmax, LmBackend, LmError, TokenProbQuery, TokenProbResult};

/// One entry of a mock rule file.
///
/// A rule matches when `pattern` occurs in the prompt (or, with `regex: true`, when the regular
/// expression matches). Rules are tried by descending `priority`, file order breaking ties. An
/// empty substring pattern matches every prompt and serves as the default rule; every rule
/// file needs one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    #[serde(default)]
    pub regex: bool,
    /// Logit per candidate token. Tokens are compared after trimming whitespace; a candidate
    /// absent from the map gets logit 0.
    #[serde(default)]
    pub token_logits: BTreeMap<String, f64>,
    #[serde(default)]
    pub priority: i64,
    /// Canned text for `complete_text`. Rules without one cannot generate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
}

impl MockRule {
    fn is_default(&self) -> bool {
        !self.regex && self.pattern.is_empty()
    }
}

enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    fn matches(&self, text: &str) -> bool {
        match self {
            Matcher::Substring(s) => text.contains(s.as_str()),
            Matcher::Regex(r) => r.is_match(text),
        }
    }
}

pub struct MockBackend {
    id: String,
    rules: Vec<(Matcher, MockRule)>,
    calls: AtomicU64,
    max_in_flight: usize,
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>) -> Result<Self, LmError> {
        Self::with_id("mock", rules)
    }

    pub fn with_id(id: impl Into<String>, rules: Vec<MockRule>) -> Result<Self, LmError> {
        if !rules.iter().any(MockRule::is_default) {
            return Err(LmError::Config(
                "mock rules need a default rule (empty substring pattern)".into(),
            ));
        }
        let mut compiled = rules
            .into_iter()
            .map(|rule| {
                let matcher = if rule.regex {
                    Matcher::Regex(Regex::new(&rule.pattern).map_err(|e| {
                        LmError::Config(format!("bad regex {:?}: {e}", rule.pattern))
                    })?)
                } else {
                    Matcher::Substring(rule.pattern.clone())
                };
                Ok((matcher, rule))
            })
            .collect::<Result<Vec<_>, LmError>>()?;
        // Stable: equal priorities keep file order.
        compiled.sort_by_key(|r| std::cmp::Reverse(r.1.priority));
        Ok(Self {
            id: id.into(),
            rules: compiled,
            calls: AtomicU64::new(0),
            max_in_flight: 4,
        })
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.max_in_flight = limit.max(1);
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmError::Config(format!("{}: {e}", path.display())))?;
        let rules: Vec<MockRule> = serde_json::from_str(&text)
            .map_err(|e| LmError::Config(format!("{}: {e}", path.display())))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::with_id(format!("mock:{name}"), rules)
    }

    fn rule_for(&self, prompt: &str) -> &MockRule {
        self.rules
            .iter()
            .find(|(m, _)| m.matches(prompt))
            .map(|(_, r)| r)
            .expect("default rule matches every prompt")
    }
}

fn logit_for(rule: &MockRule, token: &str) -> f64 {
    if let Some(&l) = rule.token_logits.get(token) {
        return l;
    }
    let trimmed = token.trim();
    rule.token_logits
        .iter()
        .find(|(k, _)| k.trim() == trimmed)
        .map(|(_, &l)| l)
        .unwrap_or(0.0)
}

impl LmBackend for MockBackend {
    fn backend_id(&self) -> String {
        self.id.clone()
    }

    fn model_name(&self) -> String {
        "mock".into()
    }

    fn query_token_probs(&self, q: &TokenProbQuery) -> Result<TokenProbResult, LmError> {
        q.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let rule = self.rule_for(&q.prompt_text);
        let logits: Vec<f64> = q.candidate_tokens.iter().map(|t| logit_for(rule, t)).collect();
        Ok(TokenProbResult {
            probs: softmax(&logits),
            backend_id: self.id.clone(),
        })
    }

    fn complete_text(&self, prompt_text: &str, _max_tokens: usize) -> Result<String, LmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.rule_for(prompt_text)
            .completion
            .clone()
            .ok_or_else(|| LmError::Capability("generate text: matched mock rule has no completion".into()))
    }

    fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(pattern: &str, yes: f64, no: f64, priority: i64) -> MockRule {
        MockRule {
            pattern: pattern.into(),
            regex: false,
            token_logits: [("Yes".to_string(), yes), ("No".to_string(), no)].into(),
            priority,
            completion: None,
        }
    }

    #[test]
    fn requires_default_rule() {
        assert!(matches!(
            MockBackend::new(vec![rule("great", 2.0, 0.0, 0)]),
            Err(LmError::Config(_))
        ));
    }

    #[test]
    fn softmax_over_rule_logits() {
        let b = MockBackend::new(vec![rule("great", 2.0, 0.0, 1), rule("", 0.0, 2.0, 0)]).unwrap();
        let q = TokenProbQuery::new("a great movie", ["Yes", "No"]).unwrap();
        let r = b.query_token_probs(&q).unwrap();
        let e2 = 2f64.exp();
        assert!((r.probs[0] - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert!((r.probs[1] - 1.0 / (e2 + 1.0)).abs() < 1e-12);
        assert!((r.probs[0] - 0.8808).abs() < 1e-4);
        assert!((r.probs[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn logit_shift_invariance() {
        let base = MockBackend::new(vec![rule("", 2.0, 0.0, 0)]).unwrap();
        let shifted = MockBackend::new(vec![rule("", 12.0, 10.0, 0)]).unwrap();
        let q = TokenProbQuery::new("anything", ["Yes", "No"]).unwrap();
        let a = base.query_token_probs(&q).unwrap().probs;
        let b = shifted.query_token_probs(&q).unwrap().probs;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn priority_beats_file_order() {
        let b = MockBackend::new(vec![
            rule("", 0.0, 5.0, 0),
            rule("movie", 1.0, 0.0, 1),
            rule("movie", 0.0, 1.0, 5),
        ])
        .unwrap();
        let q = TokenProbQuery::new("movie", ["Yes", "No"]).unwrap();
        let r = b.query_token_probs(&q).unwrap();
        assert!(r.probs[1] > r.probs[0]);
    }

    #[test]
    fn regex_rule_and_trimmed_tokens() {
        let mut r = rule(r"(?s)Input: [^\n]*\bgood\b[^\n]*\nOutput:$", 3.0, 0.0, 1);
        r.regex = true;
        let b = MockBackend::new(vec![r, rule("", 0.0, 3.0, 0)]).unwrap();
        let hit = TokenProbQuery::new("Input: so good\nOutput:", [" Yes", " No"]).unwrap();
        let miss = TokenProbQuery::new("Input: good\nOutput: x\n\nInput: bad\nOutput:", [" Yes", " No"]).unwrap();
        assert!(b.query_token_probs(&hit).unwrap().probs[0] > 0.9);
        assert!(b.query_token_probs(&miss).unwrap().probs[0] < 0.1);
    }

    #[test]
    fn completion_and_capability() {
        let mut with_text = rule("review", 0.0, 0.0, 1);
        with_text.completion = Some("Positive".into());
        let b = MockBackend::new(vec![with_text, rule("", 0.0, 0.0, 0)]).unwrap();
        assert_eq!(b.complete_text("a review", 4).unwrap(), "Positive");
        assert!(matches!(b.complete_text("other", 4), Err(LmError::Capability(_))));
        assert_eq!(b.call_count(), 2);
    }

    #[test]
    fn rule_file_parses() {
        let json = r#"[{"pattern": "great", "token_logits": {"Yes": 2, "No": 0}, "priority": 1},
                       {"pattern": "", "token_logits": {"No": 1}}]"#;
        let rules: Vec<MockRule> = serde_json::from_str(json).unwrap();
        assert!(MockBackend::new(rules).is_ok());
    }
}
