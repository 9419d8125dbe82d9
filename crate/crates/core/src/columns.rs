//! Feature columns and how to evaluate them for one example.
//!
//! A column is either the bit of a single prompt, or one class of a kNN group: the group
//! predicts a label from the output distributions of its prompts, and column `(group, c)` is set
//! when that label is `c`. Evaluating a kNN column costs one LM call per prompt in the group;
//! all columns of a group share those calls.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::features::{evaluate_cell, FeaturizeMode, KnnAnchor, KnnAnchorSet};
use crate::lm::LmBackend;
use crate::promptgen::PromptSpec;
use crate::provider::{FeatureProvider, ProviderError};
use crate::store::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Column {
    Prompt { prompt_id: String },
    Knn { group: usize, class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCatalog {
    pub columns: Vec<Column>,
    /// Every prompt a column may need, by id.
    pub prompts: Vec<PromptSpec>,
    /// Anchor sets for kNN groups, indexed by `Column::Knn::group`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knn_groups: Vec<KnnAnchorSet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingCells(pub Vec<(String, u64)>);

impl std::fmt::Display for MissingCells {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} missing cells", self.0.len())?;
        for (p, e) in self.0.iter().take(10) {
            write!(f, "\n  prompt {p}, example {e}")?;
        }
        if self.0.len() > 10 {
            write!(f, "\n  ...")?;
        }
        Ok(())
    }
}

impl ColumnCatalog {
    /// One column per prompt.
    pub fn from_prompts(prompts: Vec<PromptSpec>) -> Self {
        Self {
            columns: prompts
                .iter()
                .map(|p| Column::Prompt { prompt_id: p.id.clone() })
                .collect(),
            prompts,
            knn_groups: Vec::new(),
        }
    }

    /// kNN columns: prompts are taken `per_group` at a time in order (a short final group keeps
    /// the remainder), every training example is an anchor, and each group contributes one
    /// column per class. Training-set columns are returned alongside, computed leave-one-out so
    /// no example is its own neighbour.
    pub fn knn(
        prompts: Vec<PromptSpec>,
        per_group: usize,
        k: usize,
        train: &[Example],
        n_classes: usize,
        store: &FeatureMatrix,
    ) -> Result<(Self, Vec<Vec<bool>>), String> {
        if per_group == 0 {
            return Err("prompts_per_group must be at least 1".into());
        }
        let ids: Vec<u64> = train.iter().map(|e| e.id).collect();
        let prompt_ids: Vec<String> = prompts.iter().map(|p| p.id.clone()).collect();
        let missing = store.missing(&prompt_ids, &ids);
        if !missing.is_empty() {
            return Err(MissingCells(missing).to_string());
        }
        let mut groups = Vec::new();
        let mut columns = Vec::new();
        let mut train_columns = Vec::new();
        for (g, chunk) in prompt_ids.chunks(per_group).enumerate() {
            let anchors: Vec<KnnAnchor> = train
                .iter()
                .map(|e| KnnAnchor {
                    example_id: e.id,
                    label: e.label,
                    vectors: chunk
                        .iter()
                        .map(|p| store.get(p, e.id).expect("checked above").probs)
                        .collect(),
                })
                .collect();
            let set = KnnAnchorSet::new(chunk.to_vec(), anchors, k).map_err(|e| e.to_string())?;
            let preds = set
                .anchors
                .iter()
                .map(|a| set.predict_excluding(&a.vectors, Some(a.example_id)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            for c in 0..n_classes {
                columns.push(Column::Knn { group: g, class: c });
                train_columns.push(preds.iter().map(|&p| p == c).collect());
            }
            groups.push(set);
        }
        Ok((
            Self {
                columns,
                prompts,
                knn_groups: groups,
            },
            train_columns,
        ))
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn prompt(&self, id: &str) -> Option<&PromptSpec> {
        self.prompts.iter().find(|p| p.id == id)
    }

    /// Prompt ids column `c` needs.
    pub fn prompts_for(&self, c: usize) -> Vec<&str> {
        match &self.columns[c] {
            Column::Prompt { prompt_id } => vec![prompt_id.as_str()],
            Column::Knn { group, .. } => self.knn_groups[*group].prompt_ids.iter().map(String::as_str).collect(),
        }
    }

    /// Training matrix for prompt columns, read from `store`.
    pub fn prompt_columns(&self, store: &FeatureMatrix, example_ids: &[u64]) -> Result<Vec<Vec<bool>>, MissingCells> {
        let ids: Vec<String> = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Prompt { prompt_id } => prompt_id.clone(),
                Column::Knn { .. } => panic!("prompt_columns on a kNN catalog"),
            })
            .collect();
        let missing = store.missing(&ids, example_ids);
        if !missing.is_empty() {
            return Err(MissingCells(missing));
        }
        Ok(store.bit_columns(&ids, example_ids).expect("checked above"))
    }

    /// Human-readable label per column, for DOT export and reports.
    pub fn labels(&self, class_names: &[String]) -> Vec<String> {
        self.columns
            .iter()
            .map(|c| match c {
                Column::Prompt { prompt_id } => match self.prompt(prompt_id) {
                    Some(p) => format!("{} [{}]", p.excerpt(60), p.verbalizer.id),
                    None => format!("prompt {prompt_id}"),
                },
                Column::Knn { group, class } => {
                    let name = class_names.get(*class).map_or("?", String::as_str);
                    format!(
                        "kNN group {group} ({} prompts) predicts {name}",
                        self.knn_groups[*group].prompt_ids.len()
                    )
                }
            })
            .collect()
    }
}

/// Evaluates columns for one example from a feature matrix, querying `backend` for cells the
/// matrix lacks (or failing on them when no backend is given). Every distinct prompt consulted
/// counts as one LM call, whether it came from the matrix or the backend.
pub struct StoreProvider<'a> {
    catalog: &'a ColumnCatalog,
    store: &'a FeatureMatrix,
    example: &'a Example,
    backend: Option<&'a dyn LmBackend>,
    mode: FeaturizeMode,
    prompts_seen: BTreeSet<String>,
    knn_preds: BTreeMap<usize, usize>,
    abstains: usize,
    backend_calls: usize,
}

impl<'a> StoreProvider<'a> {
    pub fn new(
        catalog: &'a ColumnCatalog,
        store: &'a FeatureMatrix,
        example: &'a Example,
        backend: Option<&'a dyn LmBackend>,
        mode: FeaturizeMode,
    ) -> Self {
        Self {
            catalog,
            store,
            example,
            backend,
            mode,
            prompts_seen: BTreeSet::new(),
            knn_preds: BTreeMap::new(),
            abstains: 0,
            backend_calls: 0,
        }
    }

    /// Cells consulted that hold an abstention.
    pub fn abstains(&self) -> usize {
        self.abstains
    }

    /// Cells that had to be fetched from the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls
    }

    fn probs(&mut self, column: usize, prompt_id: &str) -> Result<Vec<f64>, ProviderError> {
        let cell = match self.store.get(prompt_id, self.example.id) {
            Some(cell) => cell.probs,
            None => {
                let Some(backend) = self.backend else {
                    return Err(ProviderError {
                        feature: column,
                        message: format!(
                            "cell (prompt {prompt_id}, example {}) is not cached",
                            self.example.id
                        ),
                        cache_miss: Some((prompt_id.to_string(), self.example.id)),
                    });
                };
                let prompt = self
                    .catalog
                    .prompt(prompt_id)
                    .ok_or_else(|| ProviderError::new(column, format!("unknown prompt {prompt_id}")))?;
                let probs = evaluate_cell(prompt, &self.example.text, backend, self.mode)
                    .map_err(|e| ProviderError::new(column, e.to_string()))?;
                self.store
                    .register_prompt(prompt_id, &prompt.verbalizer)
                    .and_then(|_| self.store.write(prompt_id, self.example.id, probs.clone()))
                    .map_err(|e| ProviderError::new(column, e.to_string()))?;
                self.backend_calls += 1;
                probs
            }
        };
        if self.prompts_seen.insert(prompt_id.to_string()) && cell.iter().all(|&p| p == 0.0) {
            self.abstains += 1;
        }
        Ok(cell)
    }
}

impl FeatureProvider for StoreProvider<'_> {
    fn bit(&mut self, feature: usize) -> Result<bool, ProviderError> {
        let catalog = self.catalog;
        match catalog.columns.get(feature) {
            None => Err(ProviderError::new(feature, "no such column")),
            Some(Column::Prompt { prompt_id }) => {
                let probs = self.probs(feature, prompt_id)?;
                let prompt = catalog
                    .prompt(prompt_id)
                    .ok_or_else(|| ProviderError::new(feature, format!("unknown prompt {prompt_id}")))?;
                prompt
                    .verbalizer
                    .decide(&probs)
                    .map_err(|e| ProviderError::new(feature, e.to_string()))
            }
            Some(Column::Knn { group, class }) => {
                if let Some(&pred) = self.knn_preds.get(group) {
                    return Ok(pred == *class);
                }
                let set = &catalog.knn_groups[*group];
                let vectors = set
                    .prompt_ids
                    .iter()
                    .map(|p| self.probs(feature, p))
                    .collect::<Result<Vec<_>, _>>()?;
                let pred = set
                    .predict_excluding(&vectors, None)
                    .map_err(|e| ProviderError::new(feature, e.to_string()))?;
                self.knn_preds.insert(*group, pred);
                Ok(pred == *class)
            }
        }
    }

    fn calls(&self) -> usize {
        self.prompts_seen.len()
    }
}
