use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{check_shape, vote, EnsembleError};
use crate::provider::FeatureProvider;
use crate::tree::PredictError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RegNode {
    Internal { feature: usize, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Regression tree over binary features; node 0 is the root, left is bit 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            RegNode::Internal { feature, .. } => Some(*feature),
            RegNode::Leaf { .. } => None,
        })
    }

    fn value_at(&self, columns: &[Vec<bool>], row: usize) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Internal { feature, left, right } => {
                    i = if columns[*feature][row] { *right } else { *left };
                }
            }
        }
    }

    fn value(&self, provider: &mut dyn FeatureProvider, path: &mut Vec<usize>) -> Result<f64, PredictError> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return Ok(*value),
                RegNode::Internal { feature, left, right } => {
                    path.push(i);
                    let bit = provider.bit(*feature).map_err(|source| PredictError {
                        path: path.clone(),
                        source,
                    })?;
                    path.pop();
                    i = if bit { *right } else { *left };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtConfig {
    pub stages: usize,
    pub learning_rate: f64,
    pub tree_depth: usize,
    /// Ceiling on distinct features across all trees.
    pub call_budget: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            stages: 100,
            learning_rate: 0.1,
            tree_depth: 3,
            call_budget: 40,
        }
    }
}

/// Multinomial gradient boosting: one regression tree per class per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    /// Initial class scores: log class frequencies.
    pub priors: Vec<f64>,
    /// `stages[s][c]` is the tree for class `c` at stage `s`.
    pub stages: Vec<Vec<RegTree>>,
    pub learning_rate: f64,
    pub n_classes: usize,
    pub distinct_features_used: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbdtStop {
    Stages,
    /// The next stage would have exceeded the call budget and was discarded.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtLog {
    /// Training log-loss before any stage.
    pub initial_loss: f64,
    /// Training log-loss after each accepted stage.
    pub stage_losses: Vec<f64>,
    pub stop: GbdtStop,
}

pub fn softmax_scores(scores: &[f64]) -> Vec<f64> {
    crate::lm::softmax(scores)
}

/// Mean negative log-likelihood of `labels` under softmax of per-row class scores.
pub fn log_loss(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[y]
        })
        .sum();
    total / labels.len() as f64
}

struct RegBuilder<'a> {
    columns: &'a [Vec<bool>],
    residuals: &'a [f64],
    scale: f64,
    max_depth: usize,
    nodes: Vec<RegNode>,
}

impl RegBuilder<'_> {
    fn newton_leaf(&self, rows: &[usize]) -> f64 {
        let num: f64 = rows.iter().map(|&r| self.residuals[r]).sum();
        let den: f64 = rows
            .iter()
            .map(|&r| {
                let a = self.residuals[r].abs();
                a * (1.0 - a)
            })
            .sum();
        if den < 1e-150 {
            0.0
        } else {
            self.scale * num / den
        }
    }

    /// Feature with the largest squared-error reduction; lowest index on ties.
    fn best_feature(&self, rows: &[usize]) -> Option<usize> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.residuals[r]).sum();
        let base = total * total / n;
        let mut best: Option<(f64, usize)> = None;
        for (f, column) in self.columns.iter().enumerate() {
            let (mut s_right, mut n_right) = (0.0, 0usize);
            for &r in rows {
                if column[r] {
                    s_right += self.residuals[r];
                    n_right += 1;
                }
            }
            let n_left = rows.len() - n_right;
            if n_left == 0 || n_right == 0 {
                continue;
            }
            let s_left = total - s_right;
            let gain = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64 - base;
            if gain > 1e-12 && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, f));
            }
        }
        best.map(|(_, f)| f)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(RegNode::Leaf { value: 0.0 });
        let feature = if depth < self.max_depth && rows.len() >= 2 {
            self.best_feature(&rows)
        } else {
            None
        };
        match feature {
            None => self.nodes[id] = RegNode::Leaf { value: self.newton_leaf(&rows) },
            Some(feature) => {
                let (right_rows, left_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| self.columns[feature][r]);
                let left = self.grow(left_rows, depth + 1);
                let right = self.grow(right_rows, depth + 1);
                self.nodes[id] = RegNode::Internal { feature, left, right };
            }
        }
        id
    }
}

pub fn fit_gbdt(
    columns: &[Vec<bool>],
    labels: &[usize],
    n_classes: usize,
    cfg: &GbdtConfig,
) -> Result<(GbdtModel, GbdtLog), EnsembleError> {
    check_shape(columns, labels, n_classes)?;
    if cfg.stages < 1 {
        return Err(EnsembleError::Config("stages must be at least 1".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(EnsembleError::Config("learning rate must be a non-negative number".into()));
    }
    if cfg.tree_depth < 1 {
        return Err(EnsembleError::Config("tree depth must be at least 1".into()));
    }
    if cfg.call_budget < 1 {
        return Err(EnsembleError::Config("call budget must be at least 1".into()));
    }
    let n = labels.len();
    let k = n_classes;
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let priors: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).max(1e-12).ln()).collect();

    let mut scores: Vec<Vec<f64>> = vec![priors.clone(); n];
    let initial_loss = log_loss(&scores, labels);
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut stages = Vec::new();
    let mut stage_losses = Vec::new();
    let mut stop = GbdtStop::Stages;
    let all: Vec<usize> = (0..n).collect();

    for _ in 0..cfg.stages {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax_scores(s)).collect();
        let mut trees = Vec::with_capacity(k);
        for c in 0..k {
            let residuals: Vec<f64> = (0..n)
                .map(|i| (labels[i] == c) as u8 as f64 - probs[i][c])
                .collect();
            let mut b = RegBuilder {
                columns,
                residuals: &residuals,
                scale: (k - 1) as f64 / k as f64,
                max_depth: cfg.tree_depth,
                nodes: Vec::new(),
            };
            b.grow(all.clone(), 0);
            trees.push(RegTree { nodes: b.nodes });
        }
        let mut next = used.clone();
        next.extend(trees.iter().flat_map(|t| t.features()));
        if next.len() > cfg.call_budget {
            stop = GbdtStop::Budget;
            break;
        }
        used = next;
        for (i, s) in scores.iter_mut().enumerate() {
            for (c, t) in trees.iter().enumerate() {
                s[c] += cfg.learning_rate * t.value_at(columns, i);
            }
        }
        stage_losses.push(log_loss(&scores, labels));
        stages.push(trees);
    }

    Ok((
        GbdtModel {
            priors,
            stages,
            learning_rate: cfg.learning_rate,
            n_classes: k,
            distinct_features_used: used.into_iter().collect(),
        },
        GbdtLog {
            initial_loss,
            stage_losses,
            stop,
        },
    ))
}

impl GbdtModel {
    pub fn features(&self) -> Vec<usize> {
        self.distinct_features_used.clone()
    }

    /// Class scores for one example.
    pub fn scores(&self, provider: &mut dyn FeatureProvider) -> Result<Vec<f64>, PredictError> {
        let mut f = self.priors.clone();
        let mut path = Vec::new();
        for (s, trees) in self.stages.iter().enumerate() {
            for (c, t) in trees.iter().enumerate() {
                path.clear();
                path.extend([s, c]);
                f[c] += self.learning_rate * t.value(provider, &mut path)?;
            }
        }
        Ok(f)
    }

    pub fn predict(&self, provider: &mut dyn FeatureProvider) -> Result<(usize, usize), PredictError> {
        let before = provider.calls();
        let f = self.scores(provider)?;
        Ok((vote(&f), provider.calls() - before))
    }
}
