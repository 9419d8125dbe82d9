//! Multi-prompt baselines and boosted trees: a CV-ranked Greedy stump ensemble, SAMME AdaBoost
//! over stumps, and multinomial gradient boosting with a budget on distinct features.
//!
//! All fitters work on column-major binary features. Prediction goes through a
//! [`FeatureProvider`](crate::provider::FeatureProvider), so a feature shared by several members
//! or trees is evaluated once per example.

mod boost;
mod gbdt;
mod greedy;
mod stump;

use thiserror::Error;

pub use boost::{fit_adaboost, samme_alpha, BoostConfig, BoostEnsemble, BoostLog, BoostRound, BoostStop, BoostStump, ALPHA_CAP, CHANCE_TOL};
pub use gbdt::{fit_gbdt, log_loss, GbdtConfig, GbdtLog, GbdtModel, GbdtStop, RegNode, RegTree};
pub use greedy::{fit_greedy, stump_cv_accuracy, GreedyConfig, GreedyEnsemble, GreedyMember};
pub use stump::Stump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("invalid ensemble config: {0}")]
    Config(String),
    #[error("{0}")]
    Shape(String),
}

pub(crate) fn check_shape(columns: &[Vec<bool>], labels: &[usize], n_classes: usize) -> Result<(), EnsembleError> {
    if labels.is_empty() {
        return Err(EnsembleError::Shape("no training samples".into()));
    }
    if n_classes < 2 {
        return Err(EnsembleError::Shape("need at least two classes".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(EnsembleError::Shape(format!("label {l} out of range for {n_classes} classes")));
    }
    if let Some(f) = columns.iter().position(|c| c.len() != labels.len()) {
        return Err(EnsembleError::Shape(format!("column {f} has wrong length")));
    }
    Ok(())
}

/// Highest-scoring class, lowest index on ties.
pub(crate) fn vote(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}
