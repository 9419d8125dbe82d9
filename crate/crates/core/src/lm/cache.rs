use std::collections::HashMap;
use std::hash::Hash;
use std::sync::{Arc, Mutex};

use super::{LmBackend, LmError, TokenProbQuery, TokenProbResult};

type Slot<V> = Arc<Mutex<Option<V>>>;

/// Per-key memo table. The outer lock only guards slot lookup, so concurrent misses on
/// different keys run in parallel while misses on the same key are serialized.
struct Memo<K, V> {
    slots: Mutex<HashMap<K, Slot<V>>>,
}

impl<K: Eq + Hash, V: Clone> Memo<K, V> {
    fn new() -> Self {
        Self {
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn get_or_try_insert(&self, key: K, compute: impl FnOnce() -> Result<V, LmError>) -> Result<V, LmError> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock poisoned");
            Arc::clone(slots.entry(key).or_default())
        };
        let mut value = slot.lock().expect("cache slot poisoned");
        if let Some(v) = value.as_ref() {
            return Ok(v.clone());
        }
        // Errors are not cached; the next caller retries.
        let v = compute()?;
        *value = Some(v.clone());
        Ok(v)
    }

    fn len(&self) -> usize {
        let slots = self.slots.lock().expect("cache lock poisoned");
        slots
            .values()
            .filter(|s| s.lock().map(|v| v.is_some()).unwrap_or(false))
            .count()
    }
}

/// In-memory cache in front of another backend. `call_count` reports the wrapped backend's
/// count, i.e. cache misses only.
pub struct CachedBackend<B> {
    inner: B,
    probs: Memo<TokenProbQuery, TokenProbResult>,
    completions: Memo<(String, usize), String>,
}

impl<B: LmBackend> CachedBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            probs: Memo::new(),
            completions: Memo::new(),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cached_entries(&self) -> usize {
        self.probs.len() + self.completions.len()
    }
}

impl<B: LmBackend> LmBackend for CachedBackend<B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn model_name(&self) -> String {
        self.inner.model_name()
    }

    fn query_token_probs(&self, q: &TokenProbQuery) -> Result<TokenProbResult, LmError> {
        self.probs
            .get_or_try_insert(q.clone(), || self.inner.query_token_probs(q))
    }

    fn complete_text(&self, prompt_text: &str, max_tokens: usize) -> Result<String, LmError> {
        self.completions.get_or_try_insert((prompt_text.to_string(), max_tokens), || {
            self.inner.complete_text(prompt_text, max_tokens)
        })
    }

    fn call_count(&self) -> u64 {
        self.inner.call_count()
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}
