use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::lm::{LmBackend, LmError, TokenProbQuery};
use crate::promptgen::PromptSpec;
use crate::store::{FeatureMatrix, StoreError, WriteOutcome};

/// How LM output becomes a probability vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeaturizeMode {
    /// Next-token probabilities over the verbalizer tokens.
    Logits,
    /// Generate text and word-match it against the verbalizer tokens (one-hot vector, or all
    /// zeros when nothing matches).
    Matching { max_tokens: usize },
}

#[derive(Debug, Error)]
#[error("prompt {prompt_id}, example {example_id}: {source}")]
pub struct FeaturizeError {
    pub prompt_id: String,
    pub example_id: u64,
    #[source]
    pub source: CellError,
}

#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    /// Backend invocations made by this run.
    pub backend_calls: u64,
    pub cells_written: usize,
    /// Cells that were already present.
    pub cells_skipped: usize,
    /// Word-matching completions that matched no verbalizer token.
    pub abstains: usize,
}

/// Query the LM for one (prompt, input) pair and return the probability vector to store.
pub fn evaluate_cell(
    prompt: &PromptSpec,
    text: &str,
    backend: &dyn LmBackend,
    mode: FeaturizeMode,
) -> Result<Vec<f64>, LmError> {
    let rendered = prompt.render(text);
    match mode {
        FeaturizeMode::Logits => {
            let q = TokenProbQuery::new(rendered, prompt.verbalizer.tokens.iter().cloned())?;
            Ok(backend.query_token_probs(&q)?.probs)
        }
        FeaturizeMode::Matching { max_tokens } => {
            let completion = backend.complete_text(&rendered, max_tokens)?;
            let outcome = prompt.verbalizer.match_completion(&completion);
            Ok(prompt.verbalizer.match_vector(outcome))
        }
    }
}

/// Fill every missing (prompt, example) cell. Cells already present are skipped, so an
/// interrupted run resumes where it stopped. Examples are processed in parallel up to the
/// backend's in-flight limit.
pub fn featurize(
    prompts: &[PromptSpec],
    d: &Dataset,
    backend: &dyn LmBackend,
    store: &FeatureMatrix,
    mode: FeaturizeMode,
) -> Result<FeaturizeSummary, FeaturizeError> {
    for p in prompts {
        store
            .register_prompt(&p.id, &p.verbalizer)
            .map_err(|e| FeaturizeError {
                prompt_id: p.id.clone(),
                example_id: 0,
                source: e.into(),
            })?;
    }
    let calls_before = backend.call_count();
    let mut work = Vec::new();
    let mut skipped = 0;
    for p in prompts {
        for e in &d.examples {
            if store.contains(&p.id, e.id) {
                skipped += 1;
            } else {
                work.push((p, e));
            }
        }
    }

    let written = AtomicUsize::new(0);
    let abstains = AtomicUsize::new(0);
    let run_cell = |&(p, e): &(&PromptSpec, &crate::data::Example)| -> Result<(), FeaturizeError> {
        let wrap = |source: CellError| FeaturizeError {
            prompt_id: p.id.clone(),
            example_id: e.id,
            source,
        };
        let probs = evaluate_cell(p, &e.text, backend, mode).map_err(|err| wrap(err.into()))?;
        let abstained = probs.iter().all(|&x| x == 0.0);
        if store.write(&p.id, e.id, probs).map_err(|err| wrap(err.into()))? == WriteOutcome::Written {
            written.fetch_add(1, Ordering::Relaxed);
            if abstained {
                abstains.fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok(())
    };

    let threads = backend.max_in_flight().max(1);
    let result = if threads == 1 || work.len() < 2 {
        work.iter().try_for_each(run_cell)
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| work.par_iter().try_for_each(run_cell))
    };
    result?;
    Ok(FeaturizeSummary {
        backend_calls: backend.call_count() - calls_before,
        cells_written: written.into_inner(),
        cells_skipped: skipped,
        abstains: abstains.into_inner(),
    })
}
