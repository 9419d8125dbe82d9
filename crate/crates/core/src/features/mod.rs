//! Split features: verbalizer decisions, word-matching discretization, kNN-prompting features,
//! and batch featurization into a [`FeatureMatrix`](crate::store::FeatureMatrix).

mod featurize;
mod knn;
mod verbalizer;

use thiserror::Error;

pub use featurize::{evaluate_cell, featurize, FeaturizeError, FeaturizeMode, FeaturizeSummary};
pub use knn::{binarize_knn, kl_divergence, knn_predict, smooth, KnnAnchor, KnnAnchorSet, KL_EPSILON};
pub use verbalizer::{verbalize_bit, verbalize_by_matching, MatchOutcome, Verbalizer, VerbalizerKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("probability vector has {got} entries, verbalizer has {expected} tokens")]
    Misaligned { expected: usize, got: usize },
    #[error("distributions differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid verbalizer {0}")]
    Verbalizer(String),
    #[error("anchor set is empty")]
    EmptyAnchors,
    #[error("anchor set: {0}")]
    Anchors(String),
}
