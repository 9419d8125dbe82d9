use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub method: String,
    pub strategy: String,
    pub config_fingerprint: String,
    pub n_columns: usize,
    /// Distinct columns the model can consult.
    pub n_features_used: usize,
    /// Upper bound on LM calls for one example.
    pub max_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub support: usize,
    pub correct: usize,
    /// `None` when the class has no test examples.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub n_test: usize,
    /// Mean distinct prompt evaluations per test example at inference time.
    pub mean_lm_calls: f64,
    pub max_lm_calls_observed: usize,
    pub model_summary: ModelSummary,
    /// Consulted cells whose word-matching completion matched no verbalizer token.
    pub abstain_count: usize,
    pub per_class_accuracy: Vec<ClassAccuracy>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Build from per-example outcomes `(gold, predicted, calls)`.
    pub fn from_outcomes(
        outcomes: &[(usize, usize, usize)],
        class_names: &[String],
        model_summary: ModelSummary,
        abstain_count: usize,
        warnings: Vec<String>,
    ) -> Self {
        let n_test = outcomes.len();
        let correct = outcomes.iter().filter(|(g, p, _)| g == p).count();
        let total_calls: usize = outcomes.iter().map(|o| o.2).sum();
        let per_class_accuracy = class_names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let support = outcomes.iter().filter(|o| o.0 == c).count();
                let right = outcomes.iter().filter(|o| o.0 == c && o.1 == c).count();
                ClassAccuracy {
                    class: name.clone(),
                    support,
                    correct: right,
                    accuracy: (support > 0).then(|| right as f64 / support as f64),
                }
            })
            .collect();
        let ratio = |a: usize| if n_test == 0 { 0.0 } else { a as f64 / n_test as f64 };
        Self {
            accuracy: ratio(correct),
            correct,
            n_test,
            mean_lm_calls: ratio(total_calls),
            max_lm_calls_observed: outcomes.iter().map(|o| o.2).max().unwrap_or(0),
            model_summary,
            abstain_count,
            per_class_accuracy,
            warnings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Contract(format!("bad report: {e}")))
    }

    /// Human-readable table.
    pub fn render_text(&self) -> String {
        let s = &self.model_summary;
        let mut out = String::new();
        writeln!(out, "method             {} ({})", s.method, s.strategy).unwrap();
        writeln!(out, "config fingerprint {}", s.config_fingerprint).unwrap();
        writeln!(out, "features used      {} of {} columns", s.n_features_used, s.n_columns).unwrap();
        writeln!(out, "test examples      {}", self.n_test).unwrap();
        writeln!(out, "accuracy           {:.4} ({}/{})", self.accuracy, self.correct, self.n_test).unwrap();
        writeln!(
            out,
            "mean LM calls      {:.3} (max observed {}, bound {})",
            self.mean_lm_calls, self.max_lm_calls_observed, s.max_calls
        )
        .unwrap();
        writeln!(out, "abstains           {}", self.abstain_count).unwrap();
        let width = self
            .per_class_accuracy
            .iter()
            .map(|c| c.class.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(out, "\n{:<width$}  support  correct  accuracy", "class").unwrap();
        for c in &self.per_class_accuracy {
            let acc = c.accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
            writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>8}", c.class, c.support, c.correct, acc).unwrap();
        }
        if !self.warnings.is_empty() {
            writeln!(out, "\nwarnings").unwrap();
            for w in &self.warnings {
                writeln!(out, "  {w}").unwrap();
            }
        }
        out
    }

    /// Write `report.json`, then derive `report.txt` from the JSON just written.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let json = self.to_json();
        let json_path = dir.join(REPORT_JSON);
        std::fs::write(&json_path, &json).map_err(|e| HarnessError::io(&json_path, e))?;
        let txt_path = dir.join(REPORT_TXT);
        std::fs::write(&txt_path, Self::from_json(&json)?.render_text()).map_err(|e| HarnessError::io(&txt_path, e))
    }
}
