use serde::{Deserialize, Serialize};

use super::{check_shape, vote, EnsembleError, Stump};
use crate::provider::FeatureProvider;
use crate::tree::PredictError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyMember {
    pub stump: Stump,
    pub cv_accuracy: f64,
}

/// Stumps chosen by cross-validated accuracy, combined by plurality vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyEnsemble {
    /// Sorted by descending CV accuracy.
    pub members: Vec<GreedyMember>,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub budget: usize,
    pub folds: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { budget: 10, folds: 5 }
    }
}

/// K-fold CV accuracy of a single-feature stump. Row `i` belongs to fold `i % folds`.
pub fn stump_cv_accuracy(column: &[bool], labels: &[usize], n_classes: usize, folds: usize) -> f64 {
    let n = labels.len();
    let mut correct = 0;
    for fold in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % folds == fold);
        if test.is_empty() {
            continue;
        }
        let s = Stump::fit(0, column, labels, &train, None, n_classes);
        correct += test.iter().filter(|&&i| s.predict_bit(column[i]) == labels[i]).count();
    }
    correct as f64 / n as f64
}

/// Rank every feature by CV accuracy (ties to the lower index) and keep the top `budget`.
/// Member maps are refit on all rows. Returns warnings alongside the model.
pub fn fit_greedy(
    columns: &[Vec<bool>],
    labels: &[usize],
    n_classes: usize,
    cfg: &GreedyConfig,
) -> Result<(GreedyEnsemble, Vec<String>), EnsembleError> {
    check_shape(columns, labels, n_classes)?;
    if cfg.budget < 1 {
        return Err(EnsembleError::Config("budget must be at least 1".into()));
    }
    if cfg.folds < 2 {
        return Err(EnsembleError::Config("folds must be at least 2".into()));
    }
    let mut warnings = Vec::new();
    if columns.len() < cfg.budget {
        warnings.push(format!(
            "only {} features for a budget of {}; using all",
            columns.len(),
            cfg.budget
        ));
    }
    let mut scored: Vec<(f64, usize)> = columns
        .iter()
        .enumerate()
        .map(|(f, c)| (stump_cv_accuracy(c, labels, n_classes, cfg.folds), f))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let all: Vec<usize> = (0..labels.len()).collect();
    let members = scored
        .into_iter()
        .take(cfg.budget)
        .map(|(cv_accuracy, f)| GreedyMember {
            stump: Stump::fit(f, &columns[f], labels, &all, None, n_classes),
            cv_accuracy,
        })
        .collect();
    Ok((GreedyEnsemble { members, n_classes }, warnings))
}

impl GreedyEnsemble {
    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.members.iter().map(|m| m.stump.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn predict(&self, provider: &mut dyn FeatureProvider) -> Result<(usize, usize), PredictError> {
        let before = provider.calls();
        let mut scores = vec![0.0; self.n_classes];
        for (i, m) in self.members.iter().enumerate() {
            let bit = provider
                .bit(m.stump.feature)
                .map_err(|source| PredictError { path: vec![i], source })?;
            scores[m.stump.predict_bit(bit)] += 1.0;
        }
        Ok((vote(&scores), provider.calls() - before))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ColumnProvider;

    #[test]
    fn perfect_feature_ranks_first() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let perfect: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let noise: Vec<bool> = (0..20).map(|i| (i / 2) % 2 == 0).collect();
        let constant = vec![true; 20];
        let columns = vec![noise, constant, perfect];
        let (e, warnings) = fit_greedy(&columns, &labels, 2, &GreedyConfig { budget: 2, folds: 4 }).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(e.members[0].stump.feature, 2);
        assert_eq!(e.members[0].cv_accuracy, 1.0);
        assert_eq!(e.members.len(), 2);
    }

    #[test]
    fn budget_one_is_best_stump() {
        let labels = vec![0, 1, 0, 1, 1, 0];
        let columns = vec![vec![false, true, false, true, false, false], vec![true, false, true, false, false, true]];
        let (e, _) = fit_greedy(&columns, &labels, 2, &GreedyConfig { budget: 1, folds: 2 }).unwrap();
        assert_eq!(e.members.len(), 1);
        for row in 0..6 {
            let (class, calls) = e.predict(&mut ColumnProvider::new(&columns, row)).unwrap();
            assert_eq!(class, e.members[0].stump.predict_bit(columns[e.members[0].stump.feature][row]));
            assert_eq!(calls, 1);
        }
    }

    #[test]
    fn over_budget_warns_and_uses_all() {
        let columns = vec![vec![true, false]];
        let (e, warnings) = fit_greedy(&columns, &[1, 0], 2, &GreedyConfig { budget: 3, folds: 2 }).unwrap();
        assert_eq!(e.members.len(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn tied_vote_goes_to_class_zero() {
        let e = GreedyEnsemble {
            members: vec![
                GreedyMember { stump: Stump { feature: 0, classes: [0, 1] }, cv_accuracy: 1.0 },
                GreedyMember { stump: Stump { feature: 1, classes: [0, 1] }, cv_accuracy: 1.0 },
            ],
            n_classes: 2,
        };
        let columns = vec![vec![true], vec![false]];
        assert_eq!(e.predict(&mut ColumnProvider::new(&columns, 0)).unwrap(), (0, 2));
    }

    #[test]
    fn rejects_bad_config() {
        let columns = vec![vec![true, false]];
        assert!(fit_greedy(&columns, &[0, 1], 2, &GreedyConfig { budget: 0, folds: 2 }).is_err());
        assert!(fit_greedy(&columns, &[0, 1], 2, &GreedyConfig { budget: 1, folds: 1 }).is_err());
    }
}
