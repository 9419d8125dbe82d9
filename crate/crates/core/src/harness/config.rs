use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::data::DataFormat;
use crate::features::FeaturizeMode;
use crate::lm::BackendConfig;
use crate::promptgen::{VerbalizerChoice, DEFAULT_FEWSHOT_TEMPLATE};

/// A complete experiment description, normally read from a TOML file.
///
/// Relative paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub prompts: PromptsConfig,
    #[serde(default)]
    pub knn: KnnConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    /// Separate test file. Without one, `holdout` of the training file is held out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    /// Explicit label order; inferred from the training file when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    /// Fraction of the training split actually used for fitting.
    #[serde(default = "one")]
    pub train_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    Fewshot,
    Instructions,
}

impl FromStr for PromptSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fewshot" => Ok(Self::Fewshot),
            "instructions" => Ok(Self::Instructions),
            _ => Err(format!("unknown prompt source {s:?} (fewshot, instructions)")),
        }
    }
}

impl fmt::Display for PromptSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fewshot => "fewshot",
            Self::Instructions => "instructions",
        })
    }
}

pub fn parse_verbalizer(s: &str) -> Result<VerbalizerChoice, String> {
    match s {
        "yes_no" => Ok(VerbalizerChoice::YesNo),
        "class_names" => Ok(VerbalizerChoice::ClassNames),
        _ => Err(format!("unknown verbalizer {s:?} (yes_no, class_names)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    Logits,
    Matching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    #[serde(default = "default_source")]
    pub source: PromptSource,
    #[serde(default = "default_n_prompts")]
    pub n_prompts: usize,
    #[serde(default = "one_usize")]
    pub shots_per_class: usize,
    #[serde(default = "default_template")]
    pub template: String,
    /// Verbalizer for few-shot prompts (default `class_names`). For instruction prompts it
    /// replaces each entry's own `yes_no`/`class_names` choice when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalizer: Option<VerbalizerChoice>,
    #[serde(default = "yes")]
    pub leading_space: bool,
    /// Instruction prompt file, required when `source = "instructions"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: ResponseMode,
    /// Generation length for `mode = "matching"`.
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        Self {
            source: default_source(),
            n_prompts: default_n_prompts(),
            shots_per_class: 1,
            template: default_template(),
            verbalizer: None,
            leading_space: true,
            file: None,
            mode: default_mode(),
            max_tokens: default_max_tokens(),
        }
    }
}

impl PromptsConfig {
    pub fn featurize_mode(&self) -> FeaturizeMode {
        match self.mode {
            ResponseMode::Logits => FeaturizeMode::Logits,
            ResponseMode::Matching => FeaturizeMode::Matching {
                max_tokens: self.max_tokens,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnConfig {
    #[serde(default = "default_per_group")]
    pub prompts_per_group: usize,
    #[serde(default = "one_usize")]
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            prompts_per_group: default_per_group(),
            k: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tree")]
    Tree,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "boost")]
    Boost,
    #[serde(rename = "gbdt")]
    Gbdt,
    #[serde(rename = "knn-tree")]
    KnnTree,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Tree, Method::Greedy, Method::Boost, Method::Gbdt, Method::KnnTree];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tree => "tree",
            Method::Greedy => "greedy",
            Method::Boost => "boost",
            Method::Gbdt => "gbdt",
            Method::KnnTree => "knn-tree",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?} (tree, greedy, boost, gbdt, knn-tree)"))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    /// Tree depth for `tree` and `knn-tree`; also their per-example call bound.
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    /// Defaults to `2^max_depth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_leaf_nodes: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_samples_split: usize,
    #[serde(default = "default_min_decrease")]
    pub min_impurity_decrease: f64,
    /// Members for `greedy`, rounds for `boost`, distinct-feature ceiling for `gbdt`.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Depth of each boosted regression tree.
    #[serde(default = "default_depth")]
    pub tree_depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            max_depth: default_depth(),
            max_leaf_nodes: None,
            min_samples_split: default_min_split(),
            min_impurity_decrease: default_min_decrease(),
            budget: default_budget(),
            folds: default_folds(),
            stages: default_stages(),
            learning_rate: default_lr(),
            tree_depth: default_depth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Shared cache of LM outputs.
    #[serde(default = "default_features_dir")]
    pub features_dir: PathBuf,
    /// Model, fit log and reports.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            features_dir: default_features_dir(),
            out_dir: default_out_dir(),
        }
    }
}

fn default_holdout() -> f64 {
    0.2
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_source() -> PromptSource {
    PromptSource::Fewshot
}
fn default_n_prompts() -> usize {
    10
}
fn default_template() -> String {
    DEFAULT_FEWSHOT_TEMPLATE.into()
}
fn default_mode() -> ResponseMode {
    ResponseMode::Logits
}
fn default_max_tokens() -> usize {
    5
}
fn default_per_group() -> usize {
    4
}
fn default_method() -> Method {
    Method::Tree
}
fn default_depth() -> usize {
    3
}
fn default_min_split() -> usize {
    2
}
fn default_min_decrease() -> f64 {
    1e-12
}
fn default_budget() -> usize {
    40
}
fn default_folds() -> usize {
    5
}
fn default_stages() -> usize {
    100
}
fn default_lr() -> f64 {
    0.1
}
fn default_features_dir() -> PathBuf {
    "features".into()
}
fn default_out_dir() -> PathBuf {
    "run".into()
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output.out_dir)
    }

    pub fn features_dir(&self) -> PathBuf {
        self.resolve(&self.output.features_dir)
    }

    /// Hash of everything that affects results (the `output` section is excluded).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let must_exist = |p: &Path, what: &str| -> Result<(), HarnessError> {
            let full = self.resolve(p);
            if full.is_file() {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{what} {} does not exist", full.display())))
            }
        };
        must_exist(&self.data.train, "training file")?;
        if let Some(t) = &self.data.test {
            must_exist(t, "test file")?;
        } else if !(self.data.holdout > 0.0 && self.data.holdout < 1.0) {
            return bad(format!("data.holdout {} not in (0, 1)", self.data.holdout));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction <= 1.0) {
            return bad(format!("data.train_fraction {} not in (0, 1]", self.data.train_fraction));
        }
        if self.data.test_limit == Some(0) {
            return bad("data.test_limit must be at least 1".into());
        }
        if let BackendConfig::Mock { rules } = &self.backend {
            must_exist(rules, "mock rule file")?;
        }
        match self.prompts.source {
            PromptSource::Instructions => match &self.prompts.file {
                Some(f) => must_exist(f, "instruction file")?,
                None => return bad("prompts.file is required when prompts.source = \"instructions\"".into()),
            },
            PromptSource::Fewshot => {
                if self.prompts.n_prompts == 0 || self.prompts.shots_per_class == 0 {
                    return bad("prompts.n_prompts and prompts.shots_per_class must be at least 1".into());
                }
            }
        }
        if self.knn.prompts_per_group == 0 || self.knn.k == 0 {
            return bad("knn.prompts_per_group and knn.k must be at least 1".into());
        }
        let m = &self.model;
        if m.max_depth == 0 || m.tree_depth == 0 || m.budget == 0 || m.stages == 0 {
            return bad("model depths, budget and stages must be at least 1".into());
        }
        if m.folds < 2 {
            return bad("model.folds must be at least 2".into());
        }
        if !(m.learning_rate >= 0.0 && m.learning_rate.is_finite()) {
            return bad("model.learning_rate must be non-negative".into());
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub budget: Option<usize>,
    pub stages: Option<usize>,
    pub learning_rate: Option<f64>,
    pub tree_depth: Option<usize>,
    pub max_depth: Option<usize>,
    pub train_fraction: Option<f64>,
    pub test_limit: Option<usize>,
    pub verbalizer: Option<VerbalizerChoice>,
    pub prompt_source: Option<PromptSource>,
    pub out_dir: Option<PathBuf>,
    pub features_dir: Option<PathBuf>,
}

impl Overrides {
    /// Paths given on the command line are taken relative to the working directory.
    pub fn apply(&self, cfg: &mut RunConfig) {
        let cwd_path = |p: &PathBuf| std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.clone());
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.method {
            cfg.model.method = v;
        }
        if let Some(v) = self.budget {
            cfg.model.budget = v;
        }
        if let Some(v) = self.stages {
            cfg.model.stages = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.model.learning_rate = v;
        }
        if let Some(v) = self.tree_depth {
            cfg.model.tree_depth = v;
        }
        if let Some(v) = self.max_depth {
            cfg.model.max_depth = v;
        }
        if let Some(v) = self.train_fraction {
            cfg.data.train_fraction = v;
        }
        if let Some(v) = self.test_limit {
            cfg.data.test_limit = Some(v);
        }
        if let Some(v) = self.verbalizer {
            cfg.prompts.verbalizer = Some(v);
        }
        if let Some(v) = self.prompt_source {
            cfg.prompts.source = v;
        }
        if let Some(p) = &self.out_dir {
            cfg.output.out_dir = cwd_path(p);
        }
        if let Some(p) = &self.features_dir {
            cfg.output.features_dir = cwd_path(p);
        }
    }
}
