//! One type for every fitted strategy, with uniform prediction and call counting.

use serde::{Deserialize, Serialize};

use crate::ensemble::{BoostEnsemble, GbdtModel, GreedyEnsemble};
use crate::provider::FeatureProvider;
use crate::tree::{DecisionTree, PredictError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Model {
    Tree(DecisionTree),
    Greedy(GreedyEnsemble),
    Boost(BoostEnsemble),
    Gbdt(GbdtModel),
}

impl Model {
    /// Predicted class and the LM calls this prediction added to `provider`.
    pub fn predict(&self, provider: &mut dyn FeatureProvider) -> Result<(usize, usize), PredictError> {
        match self {
            Model::Tree(m) => m.predict(provider),
            Model::Greedy(m) => m.predict(provider),
            Model::Boost(m) => m.predict(provider),
            Model::Gbdt(m) => m.predict(provider),
        }
    }

    /// Every feature the model can consult, ascending.
    pub fn features(&self) -> Vec<usize> {
        match self {
            Model::Tree(m) => m.features(),
            Model::Greedy(m) => m.features(),
            Model::Boost(m) => m.features(),
            Model::Gbdt(m) => m.features(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_classes,
            Model::Greedy(m) => m.n_classes,
            Model::Boost(m) => m.n_classes,
            Model::Gbdt(m) => m.n_classes,
        }
    }

    pub fn strategy(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Greedy(_) => "greedy",
            Model::Boost(_) => "boost",
            Model::Gbdt(_) => "gbdt",
        }
    }

    /// Largest number of features any single prediction can need.
    pub fn max_calls(&self) -> usize {
        match self {
            Model::Tree(t) => t.depth(),
            other => other.features().len(),
        }
    }
}

/// Distinct features evaluated to classify one example. `provider` must be fresh for the
/// example, so that its count starts at zero.
pub fn count_inference_calls(model: &Model, provider: &mut dyn FeatureProvider) -> Result<usize, PredictError> {
    model.predict(provider)?;
    Ok(provider.calls())
}
