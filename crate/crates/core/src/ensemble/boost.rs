use serde::{Deserialize, Serialize};

use super::{check_shape, vote, EnsembleError, Stump};
use crate::provider::FeatureProvider;
use crate::tree::PredictError;

/// Stage weight given to a stump with zero weighted error.
pub const ALPHA_CAP: f64 = 35.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostStump {
    pub stump: Stump,
    pub alpha: f64,
}

/// Multiclass AdaBoost (SAMME) over feature stumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostEnsemble {
    pub stumps: Vec<BoostStump>,
    pub n_classes: usize,
    /// Prediction when no stump was accepted: the training majority class.
    pub fallback_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub rounds: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { rounds: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostStop {
    /// All rounds ran.
    Rounds,
    /// The best stump was no better than chance and was not added.
    NoBetterThanChance,
    /// A stump with zero error was added with the capped weight.
    Perfect,
}

/// One round of fitting, with the sample weights after the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub feature: usize,
    pub error: f64,
    pub alpha: f64,
    pub accepted: bool,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostLog {
    pub rounds: Vec<BoostRound>,
    pub stop: BoostStop,
}

/// Weighted errors within this of chance count as chance.
pub const CHANCE_TOL: f64 = 1e-12;

/// `ln((1 - ε) / ε) + ln(K - 1)`, capped at [`ALPHA_CAP`] when ε is zero.
pub fn samme_alpha(error: f64, n_classes: usize) -> f64 {
    if error <= 0.0 {
        return ALPHA_CAP;
    }
    (((1.0 - error) / error).ln() + ((n_classes - 1) as f64).ln()).min(ALPHA_CAP)
}

pub fn fit_adaboost(
    columns: &[Vec<bool>],
    labels: &[usize],
    n_classes: usize,
    cfg: &BoostConfig,
) -> Result<(BoostEnsemble, BoostLog), EnsembleError> {
    check_shape(columns, labels, n_classes)?;
    if cfg.rounds < 1 {
        return Err(EnsembleError::Config("rounds must be at least 1".into()));
    }
    let n = labels.len();
    let rows: Vec<usize> = (0..n).collect();
    let mut counts = vec![0usize; n_classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    let fallback_class = crate::tree::majority(&counts);
    let chance = 1.0 - 1.0 / n_classes as f64;

    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut log = Vec::new();
    let mut stop = BoostStop::Rounds;
    for _ in 0..cfg.rounds {
        let mut best: Option<(f64, Stump)> = None;
        for (f, column) in columns.iter().enumerate() {
            let s = Stump::fit(f, column, labels, &rows, Some(&w), n_classes);
            let err: f64 = rows
                .iter()
                .filter(|&&i| s.predict_bit(column[i]) != labels[i])
                .map(|&i| w[i])
                .sum();
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, s));
            }
        }
        let Some((err, stump)) = best else {
            stop = BoostStop::NoBetterThanChance;
            break;
        };
        let err = err.clamp(0.0, 1.0);
        if err >= chance - CHANCE_TOL {
            log.push(BoostRound {
                feature: stump.feature,
                error: err,
                alpha: 0.0,
                accepted: false,
                weights: w.clone(),
            });
            stop = BoostStop::NoBetterThanChance;
            break;
        }
        let alpha = samme_alpha(err, n_classes);
        if err > 0.0 {
            let column = &columns[stump.feature];
            for i in 0..n {
                if stump.predict_bit(column[i]) != labels[i] {
                    w[i] *= alpha.exp();
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
        }
        stumps.push(BoostStump { stump, alpha });
        log.push(BoostRound {
            feature: stump.feature,
            error: err,
            alpha,
            accepted: true,
            weights: w.clone(),
        });
        if err == 0.0 {
            stop = BoostStop::Perfect;
            break;
        }
    }
    Ok((
        BoostEnsemble {
            stumps,
            n_classes,
            fallback_class,
        },
        BoostLog { rounds: log, stop },
    ))
}

impl BoostEnsemble {
    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.stumps.iter().map(|s| s.stump.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn predict(&self, provider: &mut dyn FeatureProvider) -> Result<(usize, usize), PredictError> {
        let before = provider.calls();
        if self.stumps.is_empty() {
            return Ok((self.fallback_class, 0));
        }
        let mut scores = vec![0.0; self.n_classes];
        for (i, s) in self.stumps.iter().enumerate() {
            let bit = provider
                .bit(s.stump.feature)
                .map_err(|source| PredictError { path: vec![i], source })?;
            scores[s.stump.predict_bit(bit)] += s.alpha;
        }
        Ok((vote(&scores), provider.calls() - before))
    }
}
