//! Synthetic suites with planted prompt features, for end-to-end runs against the mock backend.
//!
//! A suite fixes, for every example, the bit each prompt should return. Example texts carry a
//! keyword for a 1 bit and a decoy word for a 0 bit; the generated mock rules answer `Yes` to
//! prompt `i` exactly when its keyword appears in the text. [`Suite::write`] lays out a ready
//! to run directory: data files, rules, instruction prompts and `config.toml`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataConfig, HarnessError, KnnConfig, ModelConfig, OutputConfig, PromptSource, PromptsConfig, RunConfig};
use crate::features::VerbalizerKind;
use crate::lm::{BackendConfig, MockRule};
use crate::promptgen::InstructionEntry;

const FILLER: [&str; 8] = ["the", "film", "story", "today", "really", "plot", "seemed", "overall"];

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const RULES_FILE: &str = "rules.json";
pub const INSTRUCTIONS_FILE: &str = "instructions.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFeature {
    pub keyword: String,
    pub decoy: String,
}

impl PlantedFeature {
    pub fn new(keyword: &str, decoy: &str) -> Self {
        Self {
            keyword: keyword.into(),
            decoy: decoy.into(),
        }
    }
}

/// One row: the bit of every planted feature and the class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub bits: Vec<bool>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub labels: Vec<String>,
    pub features: Vec<PlantedFeature>,
    pub train: Vec<Row>,
    pub test: Vec<Row>,
    pub model: ModelConfig,
    pub seed: u64,
}

impl Suite {
    pub fn template(i: usize) -> String {
        format!("Question {i}: answer Yes or No about the text.\nText: {{input}}\nAnswer:")
    }

    pub fn instructions(&self) -> Vec<InstructionEntry> {
        (0..self.features.len())
            .map(|i| InstructionEntry {
                template: Self::template(i),
                verbalizer: VerbalizerKind::YesNo,
                positive_token: None,
                token_map: None,
            })
            .collect()
    }

    pub fn rules(&self) -> Vec<MockRule> {
        let logits = |yes: f64| BTreeMap::from([("Yes".to_string(), yes), ("No".to_string(), 0.0)]);
        let mut rules: Vec<MockRule> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| MockRule {
                pattern: format!(
                    r"(?s)^Question {i}:[^\n]*\nText: [^\n]*\b{}\b",
                    regex::escape(&f.keyword)
                ),
                regex: true,
                token_logits: logits(4.0),
                priority: 1,
                completion: Some("Yes".into()),
            })
            .collect();
        rules.push(MockRule {
            pattern: String::new(),
            regex: false,
            token_logits: logits(-4.0),
            priority: 0,
            completion: Some("No".into()),
        });
        rules
    }

    /// Text for a row: filler words around one keyword or decoy per feature.
    pub fn text(&self, row: &Row, rng: &mut ChaCha8Rng) -> String {
        let mut words: Vec<&str> = self
            .features
            .iter()
            .zip(&row.bits)
            .map(|(f, &b)| if b { f.keyword.as_str() } else { f.decoy.as_str() })
            .collect();
        for _ in 0..3 {
            words.push(FILLER[rng.random_range(0..FILLER.len())]);
        }
        words.shuffle(rng);
        words.join(" ")
    }

    fn jsonl(&self, rows: &[Row], rng: &mut ChaCha8Rng) -> String {
        rows.iter()
            .map(|r| serde_json::json!({ "text": self.text(r, rng), "label": self.labels[r.label] }).to_string() + "\n")
            .collect()
    }

    pub fn config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            data: DataConfig {
                train: TRAIN_FILE.into(),
                test: Some(TEST_FILE.into()),
                format: None,
                labels: Some(self.labels.clone()),
                holdout: 0.2,
                train_fraction: 1.0,
                test_limit: None,
            },
            prompts: PromptsConfig {
                source: PromptSource::Instructions,
                file: Some(INSTRUCTIONS_FILE.into()),
                ..PromptsConfig::default()
            },
            knn: KnnConfig::default(),
            model: self.model,
            backend: BackendConfig::Mock { rules: RULES_FILE.into() },
            output: OutputConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    /// Write the suite under `dir` and return the path of its `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
        };
        put(TRAIN_FILE, self.jsonl(&self.train, &mut rng))?;
        put(TEST_FILE, self.jsonl(&self.test, &mut rng))?;
        put(RULES_FILE, serde_json::to_string_pretty(&self.rules()).expect("rules serialize"))?;
        put(
            INSTRUCTIONS_FILE,
            serde_json::to_string_pretty(&self.instructions()).expect("entries serialize"),
        )?;
        put(CONFIG_FILE, self.config().to_toml())?;
        Ok(dir.join(CONFIG_FILE))
    }

    /// Bit columns of the planted features over a set of rows.
    pub fn columns(rows: &[Row]) -> Vec<Vec<bool>> {
        let n_features = rows.first().map_or(0, |r| r.bits.len());
        (0..n_features).map(|f| rows.iter().map(|r| r.bits[f]).collect()).collect()
    }

    pub fn label_vec(rows: &[Row]) -> Vec<usize> {
        rows.iter().map(|r| r.label).collect()
    }
}

/// Binary task where prompt 1 answers the label exactly and prompts 0, 2 and 3 are coin flips.
pub fn planted_suite(n_train: usize, n_test: usize, seed: u64) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut rows = |n: usize| -> Vec<Row> {
        (0..n)
            .map(|i| {
                let label = i % 2;
                let bits = vec![rng.random(), label == 1, rng.random(), rng.random()];
                Row { bits, label }
            })
            .collect()
    };
    let train = rows(n_train);
    let test = rows(n_test);
    Suite {
        name: "planted".into(),
        labels: vec!["negative".into(), "positive".into()],
        features: vec![
            PlantedFeature::new("friend", "stranger"),
            PlantedFeature::new("good", "bad"),
            PlantedFeature::new("rain", "sun"),
            PlantedFeature::new("north", "south"),
        ],
        train,
        test,
        model: ModelConfig::default(),
        seed,
    }
}

fn xor_rows(copies: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for _ in 0..copies {
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            rows.push(Row {
                bits: vec![a, b],
                label: usize::from(a != b),
            });
        }
    }
    rows
}

/// Label is the XOR of two planted features; no single feature carries any information.
///
/// The root split on balanced XOR has zero impurity decrease, so the suite's model config sets
/// `min_impurity_decrease = 0` and `max_depth = 2`.
pub fn xor_suite(train_copies: usize, test_copies: usize, seed: u64) -> Suite {
    Suite {
        name: "xor".into(),
        labels: vec!["same".into(), "different".into()],
        features: vec![PlantedFeature::new("alpha", "delta"), PlantedFeature::new("beta", "gamma")],
        train: xor_rows(train_copies),
        test: xor_rows(test_copies),
        model: ModelConfig {
            max_depth: 2,
            min_impurity_decrease: 0.0,
            ..ModelConfig::default()
        },
        seed,
    }
}

/// Three classes: `f0 = 0` gives class 0, `f0 = 1, f1 = 1` class 2, and otherwise `f2` picks
/// class 1 or 2. The fitted tree is unbalanced: one leaf at depth 1, the rest at depth 2 and 3.
/// Half of the test rows have `f0 = 0` and half have `f0 = 1, f1 = 0`.
pub fn unbalanced_suite(seed: u64) -> Suite {
    let label = |b: &[bool]| match (b[0], b[1], b[2]) {
        (false, _, _) => 0,
        (true, true, _) => 2,
        (true, false, false) => 1,
        (true, false, true) => 2,
    };
    let mut train = Vec::new();
    for _ in 0..2 {
        for code in 0..8u8 {
            let bits = vec![code & 4 != 0, code & 2 != 0, code & 1 != 0];
            train.push(Row { label: label(&bits), bits });
        }
    }
    let mut test = Vec::new();
    for code in 0..4u8 {
        let bits = vec![false, code & 2 != 0, code & 1 != 0];
        test.push(Row { label: label(&bits), bits });
    }
    for code in [0u8, 1, 0, 1] {
        let bits = vec![true, false, code != 0];
        test.push(Row { label: label(&bits), bits });
    }
    Suite {
        name: "unbalanced".into(),
        labels: vec!["a".into(), "b".into(), "c".into()],
        features: vec![
            PlantedFeature::new("red", "grey"),
            PlantedFeature::new("green", "brown"),
            PlantedFeature::new("blue", "black"),
        ],
        train,
        test,
        model: ModelConfig::default(),
        seed,
    }
}
