//! Nearest-neighbour features over LM output distributions.
//!
//! The distance between an example and an anchor is the sum, over the node's prompts, of
//! D(example ‖ anchor) on the smoothed candidate-token distributions. The predicted label is the
//! label of the closest anchor (or a plurality among the `k` closest).

use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Added to every component before renormalizing, so no component is exactly zero.
pub const KL_EPSILON: f64 = 1e-9;

/// `(v + ε) / Σ(v + ε)`.
pub fn smooth(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x + KL_EPSILON).sum();
    v.iter().map(|x| (x + KL_EPSILON) / total).collect()
}

/// KL divergence in nats between the smoothed versions of `p` and `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, FeatureError> {
    if p.len() != q.len() {
        return Err(FeatureError::LengthMismatch(p.len(), q.len()));
    }
    let (p, q) = (smooth(p), smooth(q));
    let d: f64 = p
        .iter()
        .zip(&q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnAnchor {
    pub example_id: u64,
    pub label: usize,
    /// One candidate-token distribution per prompt, in `prompt_ids` order.
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnAnchorSet {
    pub prompt_ids: Vec<String>,
    pub anchors: Vec<KnnAnchor>,
    /// Neighbours consulted; 1 means plain nearest neighbour.
    #[serde(default = "one")]
    pub k: usize,
}

fn one() -> usize {
    1
}

impl KnnAnchorSet {
    pub fn new(prompt_ids: Vec<String>, anchors: Vec<KnnAnchor>, k: usize) -> Result<Self, FeatureError> {
        if anchors.is_empty() {
            return Err(FeatureError::EmptyAnchors);
        }
        if k == 0 {
            return Err(FeatureError::Anchors("k must be at least 1".into()));
        }
        for a in &anchors {
            if a.vectors.len() != prompt_ids.len() {
                return Err(FeatureError::Anchors(format!(
                    "anchor {} has {} vectors for {} prompts",
                    a.example_id,
                    a.vectors.len(),
                    prompt_ids.len()
                )));
            }
        }
        Ok(Self { prompt_ids, anchors, k })
    }

    fn distance(&self, anchor: &KnnAnchor, x: &[Vec<f64>]) -> Result<f64, FeatureError> {
        x.iter()
            .zip(&anchor.vectors)
            .map(|(xv, av)| kl_divergence(xv, av))
            .sum()
    }

    /// Predicted label for `x`, skipping the anchor whose example id is `exclude` (used to get
    /// leave-one-out predictions for examples that are themselves anchors).
    pub fn predict_excluding(&self, x: &[Vec<f64>], exclude: Option<u64>) -> Result<usize, FeatureError> {
        if x.len() != self.prompt_ids.len() {
            return Err(FeatureError::Anchors(format!(
                "example has {} vectors for {} prompts",
                x.len(),
                self.prompt_ids.len()
            )));
        }
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.anchors.len());
        for (i, a) in self.anchors.iter().enumerate() {
            if Some(a.example_id) != exclude {
                scored.push((self.distance(a, x)?, i));
            }
        }
        if scored.is_empty() {
            return Err(FeatureError::EmptyAnchors);
        }
        // Distance, then anchor index.
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &scored[..self.k.min(scored.len())];
        if nearest.len() == 1 {
            return Ok(self.anchors[nearest[0].1].label);
        }
        // Plurality among the k nearest; ties go to the label whose first member is closest.
        let mut tally: Vec<(usize, usize, usize)> = Vec::new(); // (label, votes, first rank)
        for (rank, &(_, i)) in nearest.iter().enumerate() {
            let label = self.anchors[i].label;
            match tally.iter_mut().find(|t| t.0 == label) {
                Some(t) => t.1 += 1,
                None => tally.push((label, 1, rank)),
            }
        }
        tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        Ok(tally[0].0)
    }
}

pub fn knn_predict(anchors: &KnnAnchorSet, x_vectors: &[Vec<f64>]) -> Result<usize, FeatureError> {
    anchors.predict_excluding(x_vectors, None)
}

/// One-vs-rest columns: column `c` is set where the prediction equals `c`.
pub fn binarize_knn(preds: &[usize], n_classes: usize) -> Vec<Vec<bool>> {
    (0..n_classes)
        .map(|c| preds.iter().map(|&p| p == c).collect())
        .collect()
}
