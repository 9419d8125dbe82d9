//! Experiment orchestration: featurize, train, evaluate, ablate and export.
//!
//! Every command takes a [`RunConfig`]. LM outputs are cached in feature matrices under
//! `features_dir`, one per (backend, response mode, data file) so that configs sharing prompts
//! share LM calls. Models, fit logs and reports go to `out_dir`.
//!
//! Errors carry a stable exit code: 2 for configuration and contract errors, 3 for a cache miss
//! during cache-only evaluation.

mod config;
mod report;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    parse_verbalizer, DataConfig, KnnConfig, Method, ModelConfig, OutputConfig, Overrides, PromptSource,
    PromptsConfig, ResponseMode, RunConfig,
};
pub use report::{ClassAccuracy, EvalReport, ModelSummary, REPORT_JSON, REPORT_TXT};

use crate::columns::{ColumnCatalog, StoreProvider};
use crate::data::{load_dataset, split_dataset, DataFormat, Dataset, LabelSpace, SplitTag};
use crate::ensemble::{fit_adaboost, fit_gbdt, fit_greedy, BoostConfig, GbdtConfig, GreedyConfig};
use crate::features::{featurize, FeaturizeMode, FeaturizeSummary, VerbalizerKind};
use crate::lm::{open_backend, BackendConfig, LmBackend};
use crate::model::Model;
use crate::promptgen::{load_instruction_prompts, sample_fewshot_prompts, FewShotSampler, PromptSpec, VerbalizerChoice};
use crate::store::FeatureMatrix;
use crate::tree::{build_tree, export_dot, TreeConfig};

pub const MODEL_FILE: &str = "model.json";
pub const FIT_LOG_FILE: &str = "fit_log.json";
pub const PROMPTS_FILE: &str = "prompts.json";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("cache miss in cache-only mode: prompt {prompt_id}, example {example_id}")]
    CacheMiss { prompt_id: String, example_id: u64 },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::CacheMiss { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Training and test data after holdout, train-fraction and test-limit handling.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub train_source: PathBuf,
    pub test_source: PathBuf,
    pub warnings: Vec<String>,
}

pub fn load_splits(cfg: &RunConfig) -> Result<Splits, HarnessError> {
    let data_err = |e: crate::data::DataError| HarnessError::Config(e.to_string());
    let train_path = cfg.resolve(&cfg.data.train);
    let format = |p: &Path| cfg.data.format.unwrap_or_else(|| DataFormat::from_path(p));
    let explicit = match &cfg.data.labels {
        Some(names) => Some(LabelSpace::new(names.clone()).map_err(data_err)?),
        None => None,
    };
    let full = load_dataset(&train_path, format(&train_path), explicit, SplitTag::Train).map_err(data_err)?;
    let mut warnings = Vec::new();
    let (train, mut test, test_source) = match &cfg.data.test {
        Some(t) => {
            let test_path = cfg.resolve(t);
            let test = load_dataset(&test_path, format(&test_path), Some(full.labels.clone()), SplitTag::Test)
                .map_err(data_err)?;
            (full, test, test_path)
        }
        None => {
            let (train, mut test) = split_dataset(&full, 1.0 - cfg.data.holdout, cfg.seed).map_err(data_err)?;
            test.split_tag = SplitTag::Test;
            (train, test, train_path.clone())
        }
    };
    let mut train = if cfg.data.train_fraction < 1.0 {
        let (part, _) = split_dataset(&train, cfg.data.train_fraction, cfg.seed).map_err(data_err)?;
        part
    } else {
        train
    };
    train.split_tag = SplitTag::Train;
    if let Some(limit) = cfg.data.test_limit {
        test = test.truncated(limit);
    }
    warnings.extend(train.warnings.iter().cloned());
    warnings.extend(test.warnings.iter().cloned());
    Ok(Splits {
        train,
        test,
        train_source: train_path,
        test_source,
        warnings,
    })
}

/// Candidate prompts for a config, with warnings (e.g. dropped duplicates).
pub fn build_prompts(cfg: &RunConfig, train: &Dataset) -> Result<(Vec<PromptSpec>, Vec<String>), HarnessError> {
    let p = &cfg.prompts;
    match p.source {
        PromptSource::Fewshot => {
            let sampler = FewShotSampler {
                n_prompts: p.n_prompts,
                shots_per_class: p.shots_per_class,
                seed: cfg.seed,
                template: p.template.clone(),
                verbalizer: p.verbalizer.unwrap_or(VerbalizerChoice::ClassNames),
                leading_space: p.leading_space,
            };
            let prompts = sample_fewshot_prompts(train, &sampler).map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok((prompts, Vec::new()))
        }
        PromptSource::Instructions => {
            let file = p
                .file
                .as_ref()
                .ok_or_else(|| HarnessError::Config("prompts.file is required for instruction prompts".into()))?;
            let (prompts, mut warnings) = load_instruction_prompts(cfg.resolve(file), &train.labels, p.leading_space)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let Some(choice) = p.verbalizer else {
                return Ok((prompts, warnings));
            };
            let mut out: Vec<PromptSpec> = Vec::new();
            for (ordinal, spec) in prompts.into_iter().enumerate() {
                let spec = if spec.verbalizer.kind == VerbalizerKind::TokenMap {
                    spec
                } else {
                    let v = choice.build(&train.labels, ordinal, p.leading_space);
                    PromptSpec::new(spec.kind, spec.template, spec.demonstrations, v)
                        .map_err(|e| HarnessError::Config(e.to_string()))?
                };
                if out.iter().any(|q| q.id == spec.id) {
                    warnings.push(format!("prompt {} duplicated after verbalizer override, skipped", spec.id));
                } else {
                    out.push(spec);
                }
            }
            Ok((out, warnings))
        }
    }
}

fn file_hash(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Directory name identifying a backend and response mode; any change to either (including the
/// contents of a mock rule file) gives a fresh cache.
pub fn backend_key(cfg: &RunConfig) -> Result<String, HarnessError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&cfg.backend).expect("backend config serializes"));
    h.update(serde_json::to_vec(&cfg.prompts.featurize_mode()).expect("mode serializes"));
    let kind = match &cfg.backend {
        BackendConfig::Mock { rules } => {
            let path = cfg.resolve(rules);
            h.update(std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?);
            "mock"
        }
        BackendConfig::Http(_) => "http",
    };
    Ok(format!("{kind}-{}", hex::encode(&h.finalize()[..8])))
}

/// Feature matrices for the training and test data (the same matrix when both come from one file).
pub struct Stores {
    pub train: Arc<FeatureMatrix>,
    pub test: Arc<FeatureMatrix>,
}

fn store_dir(cfg: &RunConfig, key: &str, source: &Path) -> Result<PathBuf, HarnessError> {
    let stem = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    Ok(cfg.features_dir().join(key).join(format!("{stem}-{}", file_hash(source)?)))
}

pub fn open_stores(cfg: &RunConfig, splits: &Splits) -> Result<Stores, HarnessError> {
    let key = backend_key(cfg)?;
    let (backend_id, model) = backend_identity(cfg);
    let open = |source: &Path| -> Result<Arc<FeatureMatrix>, HarnessError> {
        let dir = store_dir(cfg, &key, source)?;
        FeatureMatrix::open(&dir, &backend_id, &model)
            .map(Arc::new)
            .map_err(|e| HarnessError::Contract(e.to_string()))
    };
    let train = open(&splits.train_source)?;
    let test = if splits.test_source == splits.train_source {
        train.clone()
    } else {
        open(&splits.test_source)?
    };
    Ok(Stores { train, test })
}

fn backend_identity(cfg: &RunConfig) -> (String, String) {
    match &cfg.backend {
        BackendConfig::Mock { rules } => (
            format!("mock:{}", rules.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()),
            "mock".into(),
        ),
        BackendConfig::Http(h) => (format!("http:{}", h.base_url), h.model.clone()),
    }
}

fn open_live_backend(cfg: &RunConfig) -> Result<Box<dyn LmBackend>, HarnessError> {
    open_backend(&cfg.backend, &cfg.base_dir).map_err(|e| HarnessError::Backend(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelection {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeOutcome {
    pub n_prompts: usize,
    pub train: Option<FeaturizeSummary>,
    pub test: Option<FeaturizeSummary>,
    /// Backend invocations made by this run.
    pub backend_calls: u64,
    pub warnings: Vec<String>,
}

/// Fill the feature cache for every candidate prompt on the selected splits. Resumable: cached
/// cells are skipped.
pub fn cmd_featurize(cfg: &RunConfig, which: SplitSelection) -> Result<FeaturizeOutcome, HarnessError> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let (prompts, mut warnings) = build_prompts(cfg, &splits.train)?;
    warnings.extend(splits.warnings.iter().cloned());
    let backend = open_live_backend(cfg)?;
    let stores = open_stores(cfg, &splits)?;
    let mode = cfg.prompts.featurize_mode();
    let before = backend.call_count();
    let run = |d: &Dataset, store: &FeatureMatrix| {
        featurize(&prompts, d, backend.as_ref(), store, mode).map_err(|e| HarnessError::Backend(e.to_string()))
    };
    let train = match which {
        SplitSelection::Train | SplitSelection::All => Some(run(&splits.train, &stores.train)?),
        SplitSelection::Test => None,
    };
    let test = match which {
        SplitSelection::Test | SplitSelection::All => Some(run(&splits.test, &stores.test)?),
        SplitSelection::Train => None,
    };
    write_json(&cfg.out_dir().join(PROMPTS_FILE), &prompts)?;
    Ok(FeaturizeOutcome {
        n_prompts: prompts.len(),
        train,
        test,
        backend_calls: backend.call_count() - before,
        warnings,
    })
}

/// Everything needed to apply a trained model to new examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: Method,
    pub labels: Vec<String>,
    pub label_fingerprint: String,
    pub config_fingerprint: String,
    pub featurize_mode: FeaturizeMode,
    pub catalog: ColumnCatalog,
    pub model: Model,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Contract(format!("{}: {e}", path.display())))
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            method: self.method.to_string(),
            strategy: self.model.strategy().into(),
            config_fingerprint: self.config_fingerprint.clone(),
            n_columns: self.catalog.len(),
            n_features_used: self.model.features().len(),
            max_calls: self.max_calls(),
        }
    }

    /// Upper bound on distinct prompts one prediction can consult.
    pub fn max_calls(&self) -> usize {
        let mut prompts = std::collections::BTreeSet::new();
        for f in self.model.features() {
            prompts.extend(self.catalog.prompts_for(f));
        }
        match &self.model {
            Model::Tree(t) if self.method == Method::Tree => t.depth(),
            _ => prompts.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub model: ModelFile,
    pub fit_log: serde_json::Value,
    pub warnings: Vec<String>,
}

pub fn tree_config(m: &ModelConfig) -> TreeConfig {
    let base = TreeConfig::for_depth(m.max_depth);
    TreeConfig {
        max_leaf_nodes: m.max_leaf_nodes.unwrap_or(base.max_leaf_nodes),
        min_samples_split: m.min_samples_split,
        min_impurity_decrease: m.min_impurity_decrease,
        ..base
    }
}

/// Fit the configured method on cached training features and write `model.json` and
/// `fit_log.json`. Fails with the list of missing cells when the cache does not cover the
/// training split.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let (prompts, mut warnings) = build_prompts(cfg, &splits.train)?;
    warnings.extend(splits.warnings.iter().cloned());
    let stores = open_stores(cfg, &splits)?;
    let train = &splits.train;
    let labels = train.label_vec();
    let ids: Vec<u64> = train.examples.iter().map(|e| e.id).collect();
    let k = train.n_classes();
    let m = &cfg.model;
    let missing = |e: String| HarnessError::Contract(format!("feature cache does not cover the training split: {e}"));

    let (catalog, columns) = if m.method == Method::KnnTree {
        ColumnCatalog::knn(prompts, cfg.knn.prompts_per_group, cfg.knn.k, &train.examples, k, &stores.train)
            .map_err(missing)?
    } else {
        let catalog = ColumnCatalog::from_prompts(prompts);
        let columns = catalog
            .prompt_columns(&stores.train, &ids)
            .map_err(|e| missing(e.to_string()))?;
        (catalog, columns)
    };
    let col_labels = catalog.labels(train.labels.names());
    let fit_err = |e: String| HarnessError::Contract(format!("fit failed: {e}"));

    let (model, mut fit_log) = match m.method {
        Method::Tree | Method::KnnTree => {
            let t = build_tree(&columns, &labels, k, &tree_config(m)).map_err(|e| fit_err(e.to_string()))?;
            let splits_log: Vec<_> = t
                .splits
                .iter()
                .map(|s| {
                    json!({
                        "node": s.node,
                        "depth": s.depth,
                        "column": s.feature,
                        "label": col_labels[s.feature],
                        "n_samples": s.n_samples,
                        "impurity_decrease": s.impurity_decrease,
                    })
                })
                .collect();
            let log = json!({
                "internal_nodes": t.internal_count(),
                "leaves": t.leaf_count(),
                "depth": t.depth(),
                "splits": splits_log,
            });
            (Model::Tree(t), log)
        }
        Method::Greedy => {
            let (e, w) = fit_greedy(&columns, &labels, k, &GreedyConfig { budget: m.budget, folds: m.folds })
                .map_err(|e| fit_err(e.to_string()))?;
            warnings.extend(w);
            let members: Vec<_> = e
                .members
                .iter()
                .map(|mem| {
                    json!({
                        "column": mem.stump.feature,
                        "label": col_labels[mem.stump.feature],
                        "cv_accuracy": mem.cv_accuracy,
                        "classes": mem.stump.classes,
                    })
                })
                .collect();
            (Model::Greedy(e), json!({ "members": members }))
        }
        Method::Boost => {
            let (e, log) = fit_adaboost(&columns, &labels, k, &BoostConfig { rounds: m.budget })
                .map_err(|e| fit_err(e.to_string()))?;
            let rounds: Vec<_> = log
                .rounds
                .iter()
                .map(|r| {
                    json!({
                        "column": r.feature,
                        "label": col_labels[r.feature],
                        "weighted_error": r.error,
                        "alpha": r.alpha,
                        "accepted": r.accepted,
                    })
                })
                .collect();
            (Model::Boost(e), json!({ "rounds": rounds, "stop": log.stop }))
        }
        Method::Gbdt => {
            let gcfg = GbdtConfig {
                stages: m.stages,
                learning_rate: m.learning_rate,
                tree_depth: m.tree_depth,
                call_budget: m.budget,
            };
            let (g, log) = fit_gbdt(&columns, &labels, k, &gcfg).map_err(|e| fit_err(e.to_string()))?;
            let log = json!({
                "stages_accepted": g.stages.len(),
                "initial_loss": log.initial_loss,
                "stage_losses": log.stage_losses,
                "stop": log.stop,
                "call_budget": m.budget,
            });
            (Model::Gbdt(g), log)
        }
    };
    let features = model.features();
    let obj = fit_log.as_object_mut().expect("fit log is an object");
    obj.insert("method".into(), json!(m.method));
    obj.insert("distinct_features_used".into(), json!(features.len()));
    obj.insert(
        "features".into(),
        json!(features.iter().map(|&f| &col_labels[f]).collect::<Vec<_>>()),
    );

    let file = ModelFile {
        method: m.method,
        labels: train.labels.names().to_vec(),
        label_fingerprint: train.labels.fingerprint(),
        config_fingerprint: cfg.fingerprint(),
        featurize_mode: cfg.prompts.featurize_mode(),
        catalog,
        model,
    };
    let out = cfg.out_dir();
    let model_path = out.join(MODEL_FILE);
    write_json(&model_path, &file)?;
    write_json(&out.join(FIT_LOG_FILE), &fit_log)?;
    Ok(TrainOutcome {
        model_path,
        model: file,
        fit_log,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Backend invocations made to fill cells missing from the cache.
    pub backend_calls: usize,
}

/// Evaluate a trained model on the test split and write `report.json` and `report.txt`.
///
/// Features are read from the cache; missing cells are fetched from the backend, or reported as
/// a cache miss when `cache_only` is set.
pub fn cmd_eval(cfg: &RunConfig, model_path: Option<&Path>, cache_only: bool) -> Result<EvalOutcome, HarnessError> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let path = model_path.map_or_else(|| cfg.out_dir().join(MODEL_FILE), Path::to_path_buf);
    let file = ModelFile::load(&path)?;
    let test = &splits.test;
    if file.label_fingerprint != test.labels.fingerprint() {
        return Err(HarnessError::Contract(format!(
            "model labels {:?} do not match the test labels {:?}",
            file.labels,
            test.labels.names()
        )));
    }
    let backend = if cache_only { None } else { Some(open_live_backend(cfg)?) };
    let stores = open_stores(cfg, &splits)?;

    let mut outcomes = Vec::with_capacity(test.len());
    let mut abstains = 0;
    let mut backend_calls = 0;
    for e in &test.examples {
        let mut provider = StoreProvider::new(&file.catalog, &stores.test, e, backend.as_deref(), file.featurize_mode);
        let (pred, calls) = file.model.predict(&mut provider).map_err(|err| match err.source.cache_miss {
            Some((prompt_id, example_id)) => HarnessError::CacheMiss { prompt_id, example_id },
            None => HarnessError::Backend(format!("example {}: {err}", e.id)),
        })?;
        abstains += provider.abstains();
        backend_calls += provider.backend_calls();
        outcomes.push((e.label, pred, calls));
    }
    let report = EvalReport::from_outcomes(
        &outcomes,
        test.labels.names(),
        file.summary(),
        abstains,
        splits.warnings.clone(),
    );
    report.write(&cfg.out_dir())?;
    Ok(EvalOutcome { report, backend_calls })
}

/// Graphviz rendering of a tree model.
pub fn cmd_export_dot(model_path: &Path) -> Result<String, HarnessError> {
    let file = ModelFile::load(model_path)?;
    match &file.model {
        Model::Tree(t) => Ok(export_dot(t, &file.catalog.labels(&file.labels), &file.labels)),
        other => Err(HarnessError::Contract(format!(
            "export-dot needs a tree model, found {}",
            other.strategy()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Verbalizer,
    PromptSource,
    TrainFraction,
    Method,
}

impl AxisName {
    fn as_str(self) -> &'static str {
        match self {
            AxisName::Verbalizer => "verbalizer",
            AxisName::PromptSource => "prompt_source",
            AxisName::TrainFraction => "train_fraction",
            AxisName::Method => "method",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<String>,
}

impl std::str::FromStr for Axis {
    type Err = HarnessError;

    /// `name=v1,v2,...`
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Config(format!("axis {s:?}: {m}"));
        let (name, values) = s.split_once('=').ok_or_else(|| bad("expected name=v1,v2".into()))?;
        let name = match name.trim() {
            "verbalizer" => AxisName::Verbalizer,
            "prompt_source" => AxisName::PromptSource,
            "train_fraction" => AxisName::TrainFraction,
            "method" => AxisName::Method,
            other => {
                return Err(bad(format!(
                    "unknown axis {other:?} (verbalizer, prompt_source, train_fraction, method)"
                )))
            }
        };
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        let axis = Axis { name, values };
        let mut probe = RunConfig {
            seed: 0,
            data: DataConfig {
                train: PathBuf::new(),
                test: None,
                format: None,
                labels: None,
                holdout: 0.2,
                train_fraction: 1.0,
                test_limit: None,
            },
            prompts: PromptsConfig::default(),
            knn: KnnConfig::default(),
            model: ModelConfig::default(),
            backend: BackendConfig::Mock { rules: PathBuf::new() },
            output: OutputConfig::default(),
            base_dir: PathBuf::new(),
        };
        for v in &axis.values {
            axis.apply(v, &mut probe).map_err(bad)?;
        }
        Ok(axis)
    }
}

impl Axis {
    fn apply(&self, value: &str, cfg: &mut RunConfig) -> Result<(), String> {
        match self.name {
            AxisName::Verbalizer => cfg.prompts.verbalizer = Some(parse_verbalizer(value)?),
            AxisName::PromptSource => cfg.prompts.source = value.parse()?,
            AxisName::Method => cfg.model.method = value.parse()?,
            AxisName::TrainFraction => {
                let f: f64 = value.parse().map_err(|_| format!("bad fraction {value:?}"))?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(format!("fraction {f} not in (0, 1]"));
                }
                cfg.data.train_fraction = f;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub settings: BTreeMap<String, String>,
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub axes: Vec<Axis>,
    pub cells: Vec<AblationCell>,
}

impl AblationOutcome {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        for n in &names {
            write!(out, "{n:<16}").unwrap();
        }
        writeln!(out, "{:>9}  {:>9}  status", "accuracy", "lm_calls").unwrap();
        for c in &self.cells {
            for n in &names {
                write!(out, "{:<16}", c.settings.get(*n).map_or("", String::as_str)).unwrap();
            }
            match (&c.report, &c.error) {
                (Some(r), _) => writeln!(out, "{:>9.4}  {:>9.3}  ok", r.accuracy, r.mean_lm_calls).unwrap(),
                (None, Some(e)) => writeln!(out, "{:>9}  {:>9}  failed: {e}", "-", "-").unwrap(),
                (None, None) => writeln!(out, "{:>9}  {:>9}  ?", "-", "-").unwrap(),
            }
        }
        out
    }
}

fn cell_name(settings: &BTreeMap<String, String>) -> String {
    if settings.is_empty() {
        return "base".into();
    }
    settings
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "=,._-".contains(c) { c } else { '_' })
        .collect()
}

/// Run featurize, train and eval for every combination of axis values. Cells share the feature
/// cache; a failing cell is recorded and the rest still run. Results go to `ablation.json` and
/// `ablation.txt` in the output directory, and each cell's artifacts to `cells/<name>/`.
pub fn cmd_ablate(cfg: &RunConfig, axes: &[Axis]) -> Result<AblationOutcome, HarnessError> {
    cfg.validate()?;
    let mut combos: Vec<Vec<(usize, String)>> = vec![vec![]];
    for (i, axis) in axes.iter().enumerate() {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push((i, v.clone()));
                    c
                })
            })
            .collect();
    }
    let base_out = cfg.out_dir();
    let mut cells = Vec::new();
    for combo in combos {
        let mut cell_cfg = cfg.clone();
        let mut settings = BTreeMap::new();
        for (i, v) in &combo {
            axes[*i].apply(v, &mut cell_cfg).map_err(HarnessError::Config)?;
            settings.insert(axes[*i].name.as_str().to_string(), v.clone());
        }
        let out_dir = base_out.join("cells").join(cell_name(&settings));
        cell_cfg.output.out_dir = out_dir.clone();
        cell_cfg.output.features_dir = cfg.features_dir();
        let result = cmd_featurize(&cell_cfg, SplitSelection::All)
            .and_then(|_| cmd_train(&cell_cfg))
            .and_then(|_| cmd_eval(&cell_cfg, None, false));
        let (report, error) = match result {
            Ok(o) => (Some(o.report), None),
            Err(e) => {
                log::warn!("ablation cell {}: {e}", cell_name(&settings));
                (None, Some(e.to_string()))
            }
        };
        cells.push(AblationCell {
            settings,
            out_dir,
            report,
            error,
        });
    }
    let outcome = AblationOutcome {
        axes: axes.to_vec(),
        cells,
    };
    write_json(&base_out.join(ABLATION_JSON), &outcome)?;
    let txt = base_out.join(ABLATION_TXT);
    std::fs::write(&txt, outcome.render_text()).map_err(|e| HarnessError::io(&txt, e))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a: Axis = "verbalizer=yes_no,class_names".parse().unwrap();
        assert_eq!(a.name, AxisName::Verbalizer);
        assert_eq!(a.values, vec!["yes_no", "class_names"]);
        assert!("verbalizer=maybe".parse::<Axis>().is_err());
        assert!("train_fraction=0.5,1.5".parse::<Axis>().is_err());
        assert!("colour=red".parse::<Axis>().is_err());
        assert!("method".parse::<Axis>().is_err());
    }

    #[test]
    fn cell_names_are_path_safe() {
        let mut s = BTreeMap::new();
        assert_eq!(cell_name(&s), "base");
        s.insert("train_fraction".to_string(), "0.5".to_string());
        s.insert("method".to_string(), "knn-tree".to_string());
        assert_eq!(cell_name(&s), "method=knn-tree,train_fraction=0.5");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        assert_eq!(HarnessError::Contract("x".into()).exit_code(), 2);
        let miss = HarnessError::CacheMiss { prompt_id: "p".into(), example_id: 1 };
        assert_eq!(miss.exit_code(), 3);
        assert!(miss.to_string().contains("prompt p, example 1"));
    }
}
