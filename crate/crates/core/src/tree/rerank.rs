//! Extension point for choosing among candidate prompts at a node.
//!
//! A node-level prompt search would propose candidates for the subset of data reaching a node;
//! this module only orders such candidates by a caller-supplied score.

use crate::promptgen::PromptSpec;

use super::{best_split_rows, TreeConfig};

/// Candidates ordered by descending score. The sort is stable, so equal scores keep input order;
/// NaN scores sort last.
pub fn rerank_candidates<T>(candidates: &[T], mut scorer: impl FnMut(&T) -> f64) -> Vec<&T> {
    let mut scored: Vec<(f64, &T)> = candidates.iter().map(|c| (scorer(c), c)).collect();
    scored.sort_by(|a, b| match (a.0.is_nan(), b.0.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        _ => b.0.total_cmp(&a.0),
    });
    scored.into_iter().map(|(_, c)| c).collect()
}

/// Default scorer: the Gini impurity decrease of a candidate's bits on the node subset.
///
/// `bits` returns the candidate's feature value for each row of `labels`. A candidate that does
/// not separate the subset scores 0.
pub fn impurity_decrease_scorer<'a>(
    labels: &'a [usize],
    n_classes: usize,
    bits: impl Fn(&PromptSpec) -> Vec<bool> + 'a,
) -> impl Fn(&PromptSpec) -> f64 + 'a {
    let cfg = TreeConfig {
        min_impurity_decrease: 0.0,
        ..TreeConfig::default()
    };
    let rows: Vec<usize> = (0..labels.len()).collect();
    move |p| {
        let column = bits(p);
        best_split_rows(labels, &rows, std::slice::from_ref(&column), n_classes, &cfg)
            .map_or(0.0, |s| s.decrease)
    }
}
