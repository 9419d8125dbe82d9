//! CART-style classification trees over binary features.
//!
//! Splits minimize the weighted Gini impurity of the two children. Nodes are expanded
//! best-first (largest weighted impurity decrease first), so `max_leaf_nodes` acts as a global
//! budget that drops the least useful splits. Every tie goes to the lowest index: feature index
//! for splits, class index for leaf labels, creation order for expansion.
//!
//! By convention the left child receives rows whose bit is 0 ("No") and the right child rows
//! whose bit is 1 ("Yes").

mod dot;
mod rerank;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{FeatureProvider, ProviderError};

pub use dot::export_dot;
pub use rerank::{impurity_decrease_scorer, rerank_candidates};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("class counts are all zero")]
    EmptyCounts,
    #[error("invalid tree config: {0}")]
    Config(String),
    #[error("no training samples")]
    NoSamples,
    #[error("{0}")]
    Shape(String),
}

/// Gini impurity `1 - Σ (n_c / n)²`.
pub fn gini(counts: &[usize]) -> Result<f64, TreeError> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(TreeError::EmptyCounts);
    }
    let n = n as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub max_leaf_nodes: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_impurity_decrease: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self::for_depth(3)
    }
}

impl TreeConfig {
    /// Config for a tree that needs at most `max_depth` LM calls per example.
    pub fn for_depth(max_depth: usize) -> Self {
        Self {
            max_leaf_nodes: 1usize.checked_shl(max_depth as u32).unwrap_or(usize::MAX),
            max_depth,
            min_samples_split: 2,
            min_impurity_decrease: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: &str| Err(TreeError::Config(m.into()));
        if self.max_leaf_nodes < 1 {
            return bad("max_leaf_nodes must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return bad("min_impurity_decrease must be non-negative");
        }
        Ok(())
    }
}

/// Chosen split at a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Weighted child impurity `(n_L/n)·gini(L) + (n_R/n)·gini(R)`.
    pub impurity: f64,
    /// Parent impurity minus `impurity`.
    pub decrease: f64,
}

fn histogram(labels: &[usize], rows: &[usize], n_classes: usize) -> Vec<usize> {
    let mut h = vec![0; n_classes];
    for &r in rows {
        h[labels[r]] += 1;
    }
    h
}

fn sum_sq(counts: &[usize]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

/// Best split of `rows` by exact rational comparison.
///
/// With child counts `l`, `r`, the weighted child impurity equals `1 - S/n` where
/// `S = Σl²/n_L + Σr²/n_R`, so the best feature maximizes `S`. `S` is compared as a fraction in
/// integer arithmetic, so equal-quality features tie exactly and the lower index wins.
pub fn best_split_rows(
    labels: &[usize],
    rows: &[usize],
    columns: &[Vec<bool>],
    n_classes: usize,
    cfg: &TreeConfig,
) -> Option<Split> {
    let n = rows.len();
    if n < cfg.min_samples_split.max(2) {
        return None;
    }
    let parent = histogram(labels, rows, n_classes);
    let parent_sq = sum_sq(&parent);
    let n128 = n as u128;

    // (numerator, denominator) of S for the best feature so far.
    let mut best: Option<(usize, u128, u128)> = None;
    let mut left = vec![0usize; n_classes];
    for (f, column) in columns.iter().enumerate() {
        left.iter_mut().for_each(|c| *c = 0);
        let mut n_left = 0usize;
        for &r in rows {
            if !column[r] {
                left[labels[r]] += 1;
                n_left += 1;
            }
        }
        let n_right = n - n_left;
        if n_left == 0 || n_right == 0 {
            continue;
        }
        let right_sq: u128 = parent
            .iter()
            .zip(&left)
            .map(|(&p, &l)| ((p - l) as u128).pow(2))
            .sum();
        let (nl, nr) = (n_left as u128, n_right as u128);
        let num = sum_sq(&left) * nr + right_sq * nl;
        let den = nl * nr;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((f, num, den));
        }
    }

    let (feature, num, den) = best?;
    // decrease = (S - Σp²/n) / n = (num·n - Σp²·den) / (den·n²)
    let gain_num = num * n128 - parent_sq * den;
    let decrease = gain_num as f64 / (den as f64 * (n as f64).powi(2));
    if decrease < cfg.min_impurity_decrease {
        return None;
    }
    let impurity = 1.0 - (num as f64 / den as f64) / n as f64;
    Some(Split {
        feature,
        impurity: impurity.max(0.0),
        decrease,
    })
}

/// Best split over all rows.
pub fn best_split(labels: &[usize], columns: &[Vec<bool>], n_classes: usize, cfg: &TreeConfig) -> Option<Split> {
    let rows: Vec<usize> = (0..labels.len()).collect();
    best_split_rows(labels, &rows, columns, n_classes, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature: usize,
        /// Child for bit 0.
        left: usize,
        /// Child for bit 1.
        right: usize,
        n_samples: usize,
        class_histogram: Vec<usize>,
    },
    Leaf {
        class_index: usize,
        class_histogram: Vec<usize>,
    },
}

impl TreeNode {
    pub fn histogram(&self) -> &[usize] {
        match self {
            TreeNode::Internal { class_histogram, .. } | TreeNode::Leaf { class_histogram, .. } => class_histogram,
        }
    }
}

/// Fit-time record of one accepted split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub node: usize,
    pub depth: usize,
    pub feature: usize,
    pub n_samples: usize,
    pub impurity_decrease: f64,
}

/// A fitted tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_classes: usize,
    pub config: TreeConfig,
    #[serde(default)]
    pub splits: Vec<SplitRecord>,
}

/// Majority class, lowest index on ties.
pub fn majority(hist: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in hist.iter().enumerate() {
        if n > hist[best] {
            best = c;
        }
    }
    best
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    split: Split,
    priority: f64,
    seq: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Max-heap: larger priority first, then earlier creation.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Grow a tree on column-major binary features.
pub fn build_tree(
    columns: &[Vec<bool>],
    labels: &[usize],
    n_classes: usize,
    cfg: &TreeConfig,
) -> Result<DecisionTree, TreeError> {
    cfg.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(TreeError::NoSamples);
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(TreeError::Shape(format!("label {bad} out of range for {n_classes} classes")));
    }
    if let Some((f, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(TreeError::Shape(format!("column {f} has wrong length")));
    }

    let leaf = |rows: &[usize]| {
        let h = histogram(labels, rows, n_classes);
        TreeNode::Leaf {
            class_index: majority(&h),
            class_histogram: h,
        }
    };
    let total = n as f64;
    let mut seq = 0usize;
    let mut candidate = |node: usize, rows: Vec<usize>, depth: usize| -> Option<Pending> {
        if depth >= cfg.max_depth {
            return None;
        }
        let split = best_split_rows(labels, &rows, columns, n_classes, cfg)?;
        seq += 1;
        Some(Pending {
            node,
            priority: rows.len() as f64 / total * split.decrease,
            rows,
            depth,
            split,
            seq,
        })
    };

    let all: Vec<usize> = (0..n).collect();
    let mut nodes = vec![leaf(&all)];
    let mut splits = Vec::new();
    let mut heap = BinaryHeap::new();
    heap.extend(candidate(0, all, 0));
    let mut n_leaves = 1;

    while n_leaves < cfg.max_leaf_nodes {
        let Some(p) = heap.pop() else { break };
        let feature = p.split.feature;
        let (right_rows, left_rows): (Vec<usize>, Vec<usize>) =
            p.rows.iter().partition(|&&r| columns[feature][r]);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(leaf(&left_rows));
        nodes.push(leaf(&right_rows));
        let class_histogram = nodes[p.node].histogram().to_vec();
        nodes[p.node] = TreeNode::Internal {
            feature,
            left,
            right,
            n_samples: p.rows.len(),
            class_histogram,
        };
        splits.push(SplitRecord {
            node: p.node,
            depth: p.depth,
            feature,
            n_samples: p.rows.len(),
            impurity_decrease: p.split.decrease,
        });
        n_leaves += 1;
        heap.extend(candidate(left, left_rows, p.depth + 1));
        heap.extend(candidate(right, right_rows, p.depth + 1));
    }

    Ok(DecisionTree {
        nodes,
        n_classes,
        config: *cfg,
        splits,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("at node path {path:?}: {source}")]
pub struct PredictError {
    pub path: Vec<usize>,
    #[source]
    pub source: ProviderError,
}

impl DecisionTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Features used anywhere in the tree, ascending.
    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Index of the leaf reached by following `provider` from the root.
    pub fn leaf_for(&self, provider: &mut dyn FeatureProvider) -> Result<usize, PredictError> {
        let mut path = Vec::new();
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return Ok(i),
                TreeNode::Internal { feature, left, right, .. } => {
                    path.push(i);
                    let bit = provider.bit(*feature).map_err(|source| PredictError {
                        path: path.clone(),
                        source,
                    })?;
                    i = if bit { *right } else { *left };
                }
            }
        }
    }

    /// Predicted class and the LM calls this prediction added to `provider`.
    pub fn predict(&self, provider: &mut dyn FeatureProvider) -> Result<(usize, usize), PredictError> {
        let before = provider.calls();
        let leaf = self.leaf_for(provider)?;
        let class = match &self.nodes[leaf] {
            TreeNode::Leaf { class_index, .. } => *class_index,
            TreeNode::Internal { .. } => unreachable!("leaf_for returns leaves"),
        };
        Ok((class, provider.calls() - before))
    }
}

pub fn predict(t: &DecisionTree, provider: &mut dyn FeatureProvider) -> Result<(usize, usize), PredictError> {
    t.predict(provider)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ColumnProvider;
    use proptest::prelude::*;

    fn cols(rows: &[&[u8]]) -> Vec<Vec<bool>> {
        let n_features = rows[0].len();
        (0..n_features)
            .map(|f| rows.iter().map(|r| r[f] == 1).collect())
            .collect()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[8, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[4, 4]).unwrap(), 0.5);
        assert!((gini(&[2, 1, 1]).unwrap() - 0.625).abs() < 1e-12);
        assert_eq!(gini(&[0, 0]), Err(TreeError::EmptyCounts));
    }

    #[test]
    fn perfect_feature_wins() {
        let labels = [0, 0, 1, 1];
        let columns = vec![vec![false, false, true, true], vec![false, true, false, true]];
        let s = best_split(&labels, &columns, 2, &TreeConfig::default()).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.impurity, 0.0);
        assert_eq!(s.decrease, 0.5);
    }

    #[test]
    fn constant_features_give_no_split() {
        let labels = [0, 1, 0, 1];
        let columns = vec![vec![true; 4], vec![false; 4]];
        assert_eq!(best_split(&labels, &columns, 2, &TreeConfig::default()), None);
    }

    #[test]
    fn identical_features_pick_lower_index() {
        let labels = [0, 1, 0, 1];
        let f = vec![false, true, false, true];
        let s = best_split(&labels, &[vec![true; 4], f.clone(), f], 2, &TreeConfig::default()).unwrap();
        assert_eq!(s.feature, 1);
    }

    #[test]
    fn zero_decrease_is_never_chosen() {
        // Feature independent of the label: children keep the parent's class mix.
        let labels = [0, 1, 0, 1];
        let columns = vec![vec![false, false, true, true]];
        assert_eq!(best_split(&labels, &columns, 2, &TreeConfig::default()), None);
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let columns = cols(&[&[0, 1], &[1, 0], &[1, 1]]);
        let t = build_tree(&columns, &[1, 1, 1], 2, &TreeConfig::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(matches!(t.root(), TreeNode::Leaf { class_index: 1, .. }));
    }

    #[test]
    fn xor_needs_depth_two() {
        let columns = cols(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        let labels = [0, 1, 1, 0];
        // No stump is pure on XOR: every single-feature split leaves a [1,1] child on each side.
        for f in 0..2 {
            let rows: Vec<usize> = (0..4).collect();
            let lc: Vec<usize> = rows.iter().filter(|&&r| !columns[f][r]).map(|&r| labels[r]).collect();
            assert_eq!(lc.iter().filter(|&&l| l == 0).count(), 1);
        }
        let cfg = TreeConfig {
            min_impurity_decrease: 0.0,
            ..TreeConfig::for_depth(2)
        };
        let t = build_tree(&columns, &labels, 2, &cfg).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.leaf_count(), 4);
        for row in 0..4 {
            let (class, calls) = t.predict(&mut ColumnProvider::new(&columns, row)).unwrap();
            assert_eq!(class, labels[row]);
            assert_eq!(calls, 2);
        }
    }

    #[test]
    fn single_leaf_budget() {
        let columns = cols(&[&[0], &[1], &[1]]);
        let cfg = TreeConfig {
            max_leaf_nodes: 1,
            ..TreeConfig::default()
        };
        let t = build_tree(&columns, &[0, 1, 1], 2, &cfg).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(matches!(t.root(), TreeNode::Leaf { class_index: 1, .. }));
    }

    #[test]
    fn leaf_budget_keeps_the_most_useful_split() {
        // f0 separates classes {2,3} (bit 0) from {0,1} (bit 1). Root scores, as Σl²/n_L + Σr²/n_R:
        // f0 = 26/6 + 18/6 = 7.33, f1 = 35/9 + 3 = 6.89, f2 = 43/11 + 1 = 4.91.
        // Child gains weighted by n_t/n: bit-0 side splits on f2 for (6/12)(10/36) = 0.139,
        // bit-1 side splits on f1 for (6/12)(1/2) = 0.25. With three leaves only f1 survives,
        // although the bit-0 child was queued first.
        let rows: Vec<&[u8]> = vec![
            &[0, 0, 0], &[0, 0, 0], &[0, 0, 0], &[0, 0, 0], &[0, 0, 0], &[0, 0, 1],
            &[1, 0, 0], &[1, 0, 0], &[1, 0, 0], &[1, 1, 0], &[1, 1, 0], &[1, 1, 0],
        ];
        let labels = [2, 2, 2, 2, 2, 3, 0, 0, 0, 1, 1, 1];
        let columns = cols(&rows);
        let cfg = TreeConfig {
            max_leaf_nodes: 3,
            ..TreeConfig::for_depth(3)
        };
        let t = build_tree(&columns, &labels, 4, &cfg).unwrap();
        assert_eq!(t.leaf_count(), 3);
        let used: Vec<usize> = t.splits.iter().map(|s| s.feature).collect();
        assert_eq!(used, vec![0, 1]);
        let full = build_tree(&columns, &labels, 4, &TreeConfig::for_depth(3)).unwrap();
        let used: Vec<usize> = full.splits.iter().map(|s| s.feature).collect();
        assert_eq!(used, vec![0, 1, 2]);
    }

    #[test]
    fn unbalanced_tree_uses_fewer_calls_on_short_paths() {
        // Label 0 whenever f0 = 0. Otherwise f1 = 1 gives 2, and f1 = 0 needs f2 as well.
        let rows: Vec<&[u8]> = vec![
            &[0, 0, 0], &[0, 1, 1], &[0, 1, 0], &[0, 0, 1],
            &[1, 0, 0], &[1, 0, 1], &[1, 1, 0], &[1, 1, 1],
        ];
        let labels = [0, 0, 0, 0, 1, 2, 2, 2];
        let columns = cols(&rows);
        let t = build_tree(&columns, &labels, 3, &TreeConfig::for_depth(3)).unwrap();
        assert_eq!(t.depth(), 3);
        let (class, calls) = t.predict(&mut ColumnProvider::new(&columns, 0)).unwrap();
        assert_eq!((class, calls), (0, 1));
        let (class, calls) = t.predict(&mut ColumnProvider::new(&columns, 5)).unwrap();
        assert_eq!((class, calls), (2, 3));
    }

    #[test]
    fn warmed_provider_costs_nothing() {
        let columns = cols(&[&[0], &[1]]);
        let t = build_tree(&columns, &[0, 1], 2, &TreeConfig::for_depth(1)).unwrap();
        let mut p = ColumnProvider::new(&columns, 1);
        assert_eq!(t.predict(&mut p).unwrap(), (1, 1));
        assert_eq!(t.predict(&mut p).unwrap(), (1, 0));
    }

    #[test]
    fn provider_failure_carries_path() {
        let columns = cols(&[&[0], &[1]]);
        let t = build_tree(&columns, &[0, 1], 2, &TreeConfig::for_depth(1)).unwrap();
        let err = t.predict(&mut ColumnProvider::new(&columns, 9)).unwrap_err();
        assert_eq!(err.path, vec![0]);
        assert_eq!(err.source.feature, 0);
    }

    #[test]
    fn config_validation() {
        assert!(TreeConfig { max_depth: 0, ..TreeConfig::default() }.validate().is_err());
        assert!(TreeConfig { min_samples_split: 1, ..TreeConfig::default() }.validate().is_err());
        assert!(TreeConfig { min_impurity_decrease: -1.0, ..TreeConfig::default() }.validate().is_err());
        assert_eq!(TreeConfig::for_depth(3).max_leaf_nodes, 8);
    }

    fn random_problem() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<bool>>)> {
        (2usize..20, 1usize..8, 2usize..4).prop_flat_map(|(n, f, k)| {
            (
                proptest::collection::vec(0..k, n),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), f),
            )
        })
    }

    proptest! {
        #[test]
        fn tree_invariants((labels, columns) in random_problem(), depth in 1usize..5, leaves in 1usize..10) {
            let k = labels.iter().max().unwrap() + 1;
            let cfg = TreeConfig { max_leaf_nodes: leaves, ..TreeConfig::for_depth(depth) };
            let t = build_tree(&columns, &labels, k, &cfg).unwrap();
            prop_assert!(t.depth() <= depth);
            prop_assert!(t.leaf_count() <= leaves);
            for node in &t.nodes {
                match node {
                    TreeNode::Internal { left, right, class_histogram, .. } => {
                        let sum: Vec<usize> = t.nodes[*left].histogram().iter()
                            .zip(t.nodes[*right].histogram()).map(|(a, b)| a + b).collect();
                        prop_assert_eq!(&sum, class_histogram);
                    }
                    TreeNode::Leaf { class_index, class_histogram } => {
                        prop_assert_eq!(*class_index, majority(class_histogram));
                    }
                }
            }
            // Distinct features along every path, and calls bounded by depth.
            for row in 0..labels.len() {
                let mut p = ColumnProvider::new(&columns, row);
                let (_, calls) = t.predict(&mut p).unwrap();
                prop_assert!(calls <= t.depth());
                let mut path_features = vec![];
                let mut i = 0;
                while let TreeNode::Internal { feature, left, right, .. } = &t.nodes[i] {
                    path_features.push(*feature);
                    i = if columns[*feature][row] { *right } else { *left };
                }
                let mut dedup = path_features.clone();
                dedup.sort_unstable();
                dedup.dedup();
                prop_assert_eq!(dedup.len(), path_features.len());
                prop_assert_eq!(calls, path_features.len());
            }
            // Deterministic serialization.
            let again = build_tree(&columns, &labels, k, &cfg).unwrap();
            prop_assert_eq!(serde_json::to_string(&t).unwrap(), serde_json::to_string(&again).unwrap());
        }

        #[test]
        fn budgeted_splits_are_a_prefix((labels, columns) in random_problem(), leaves in 1usize..6) {
            let k = labels.iter().max().unwrap() + 1;
            let full = build_tree(&columns, &labels, k, &TreeConfig::for_depth(4)).unwrap();
            let cfg = TreeConfig { max_leaf_nodes: leaves, ..TreeConfig::for_depth(4) };
            let cut = build_tree(&columns, &labels, k, &cfg).unwrap();
            let n = cut.splits.len();
            prop_assert_eq!(n, full.splits.len().min(leaves - 1));
            prop_assert_eq!(&cut.splits[..], &full.splits[..n]);
        }

        #[test]
        fn unrestricted_tree_fits_consistent_data((labels, columns) in random_problem()) {
            let n = labels.len();
            let k = labels.iter().max().unwrap() + 1;
            // Make the data non-contradictory: identical rows must share a label.
            let row_key = |r: usize| columns.iter().map(|c| c[r]).collect::<Vec<_>>();
            let mut labels = labels;
            for r in 0..n {
                if let Some(first) = (0..r).find(|&q| row_key(q) == row_key(r)) {
                    labels[r] = labels[first];
                }
            }
            let cfg = TreeConfig {
                max_leaf_nodes: usize::MAX,
                max_depth: 64,
                min_samples_split: 2,
                min_impurity_decrease: 0.0,
            };
            let t = build_tree(&columns, &labels, k, &cfg).unwrap();
            let correct = (0..n)
                .filter(|&r| t.predict(&mut ColumnProvider::new(&columns, r)).unwrap().0 == labels[r])
                .count();
            prop_assert_eq!(correct, n);
        }
    }
}
