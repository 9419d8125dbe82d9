//! Prompt candidates: few-shot prompts sampled from training data, and instruction prompts
//! loaded from a file.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Dataset, LabelSpace};
use crate::features::{Verbalizer, VerbalizerKind};

pub const INPUT_SLOT: &str = "{input}";
pub const DEFAULT_FEWSHOT_TEMPLATE: &str = "Input: {input}\nOutput:";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("class {class:?} has {available} training examples, need {needed}")]
    TooFewExamples {
        class: String,
        available: usize,
        needed: usize,
    },
    #[error("entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("template must contain {INPUT_SLOT}: {0:?}")]
    MissingSlot(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Fewshot,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demonstration {
    pub text: String,
    pub label: String,
}

/// A prompt template together with the verbalizer that turns its LM output into a bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub kind: PromptKind,
    pub template: String,
    pub demonstrations: Vec<Demonstration>,
    pub verbalizer: Verbalizer,
}

#[derive(Serialize)]
struct HashedContent<'a> {
    kind: PromptKind,
    template: &'a str,
    demonstrations: &'a [Demonstration],
    verbalizer: &'a Verbalizer,
}

fn content_id(kind: PromptKind, template: &str, demos: &[Demonstration], verbalizer: &Verbalizer) -> String {
    let content = HashedContent {
        kind,
        template,
        demonstrations: demos,
        verbalizer,
    };
    let bytes = serde_json::to_vec(&content).expect("prompt content serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

impl PromptSpec {
    pub fn new(
        kind: PromptKind,
        template: impl Into<String>,
        demonstrations: Vec<Demonstration>,
        verbalizer: Verbalizer,
    ) -> Result<Self, PromptError> {
        let template = template.into();
        if !template.contains(INPUT_SLOT) {
            return Err(PromptError::MissingSlot(template));
        }
        verbalizer
            .validate()
            .map_err(|e| PromptError::Invalid(e.to_string()))?;
        let id = content_id(kind, &template, &demonstrations, &verbalizer);
        Ok(Self {
            id,
            kind,
            template,
            demonstrations,
            verbalizer,
        })
    }

    /// Render the prompt for one input. Few-shot prompts show each demonstration as the
    /// template filled with its text followed by ` <label>` and a blank line, then the
    /// template filled with the query, so the next token is the answer.
    pub fn render(&self, input: &str) -> String {
        let mut out = String::new();
        for demo in &self.demonstrations {
            out.push_str(&self.template.replace(INPUT_SLOT, &demo.text));
            out.push(' ');
            out.push_str(&demo.label);
            out.push_str("\n\n");
        }
        out.push_str(&self.template.replace(INPUT_SLOT, input));
        out
    }

    /// Short human-readable description for tree renderings.
    pub fn excerpt(&self, max_chars: usize) -> String {
        let base = match self.kind {
            PromptKind::Instruction => self.template.clone(),
            PromptKind::Fewshot => {
                let demos: Vec<String> = self
                    .demonstrations
                    .iter()
                    .map(|d| format!("{} → {}", d.text, d.label))
                    .collect();
                format!("few-shot: {}", demos.join(" | "))
            }
        };
        let flat = base.replace('\n', " ");
        if flat.chars().count() <= max_chars {
            flat
        } else {
            let cut: String = flat.chars().take(max_chars.saturating_sub(1)).collect();
            format!("{cut}…")
        }
    }
}

pub fn render(p: &PromptSpec, input: &str) -> String {
    p.render(input)
}

/// Which verbalizer to attach to generated prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbalizerChoice {
    YesNo,
    ClassNames,
}

impl VerbalizerChoice {
    /// Verbalizer for the `ordinal`-th generated prompt. Class-name verbalizers rotate their
    /// positive class through the label space so every class gets one-vs-rest columns.
    pub fn build(self, labels: &LabelSpace, ordinal: usize, leading_space: bool) -> Verbalizer {
        match self {
            VerbalizerChoice::YesNo => Verbalizer::yes_no(leading_space),
            VerbalizerChoice::ClassNames => {
                let positive = if labels.len() == 2 { 1 } else { ordinal % labels.len() };
                Verbalizer::class_names(labels, positive, leading_space)
                    .expect("positive class is in range")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSampler {
    pub n_prompts: usize,
    pub shots_per_class: usize,
    pub seed: u64,
    pub template: String,
    pub verbalizer: VerbalizerChoice,
    pub leading_space: bool,
}

impl Default for FewShotSampler {
    fn default() -> Self {
        Self {
            n_prompts: 10,
            shots_per_class: 1,
            seed: 0,
            template: DEFAULT_FEWSHOT_TEMPLATE.into(),
            verbalizer: VerbalizerChoice::ClassNames,
            leading_space: true,
        }
    }
}

/// Sample `n_prompts` few-shot prompts. Within a prompt, demonstrations are drawn without
/// replacement, `shots_per_class` per class, and interleaved class by class in label order;
/// prompts are drawn independently of each other.
pub fn sample_fewshot_prompts(train: &Dataset, sampler: &FewShotSampler) -> Result<Vec<PromptSpec>, PromptError> {
    if sampler.n_prompts == 0 {
        return Err(PromptError::Invalid("n_prompts must be at least 1".into()));
    }
    if sampler.shots_per_class == 0 {
        return Err(PromptError::Invalid("shots_per_class must be at least 1".into()));
    }
    if !sampler.template.contains(INPUT_SLOT) {
        return Err(PromptError::MissingSlot(sampler.template.clone()));
    }
    let k = train.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, e) in train.examples.iter().enumerate() {
        by_class[e.label].push(pos);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < sampler.shots_per_class {
            return Err(PromptError::TooFewExamples {
                class: train.labels.name(c).unwrap_or("?").to_string(),
                available: members.len(),
                needed: sampler.shots_per_class,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    (0..sampler.n_prompts)
        .map(|ordinal| {
            let picks: Vec<Vec<usize>> = by_class
                .iter()
                .map(|members| {
                    rand::seq::index::sample(&mut rng, members.len(), sampler.shots_per_class)
                        .into_iter()
                        .map(|i| members[i])
                        .collect()
                })
                .collect();
            let demos = (0..sampler.shots_per_class)
                .flat_map(|round| picks.iter().map(move |p| p[round]))
                .map(|pos| {
                    let e = &train.examples[pos];
                    Demonstration {
                        text: e.text.clone(),
                        label: train.labels.name(e.label).expect("label in range").to_string(),
                    }
                })
                .collect();
            let verbalizer = sampler.verbalizer.build(&train.labels, ordinal, sampler.leading_space);
            PromptSpec::new(PromptKind::Fewshot, sampler.template.clone(), demos, verbalizer)
        })
        .collect()
}

/// One entry of an instruction-prompt file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionEntry {
    pub template: String,
    pub verbalizer: VerbalizerKind,
    /// Positive token for `yes_no` (default `Yes`) or positive class name for `class_names`
    /// (default: the second class of a binary task).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_token: Option<String>,
    /// For `token_map`: token → 1 for the single positive token, 0 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_map: Option<BTreeMap<String, u8>>,
}

impl InstructionEntry {
    fn verbalizer(&self, labels: &LabelSpace, leading_space: bool) -> Result<Verbalizer, String> {
        let trim_eq = |a: &str, b: &str| a.trim() == b.trim();
        match self.verbalizer {
            VerbalizerKind::YesNo => {
                let mut v = Verbalizer::yes_no(leading_space);
                if let Some(p) = &self.positive_token {
                    v.positive_index = v
                        .tokens
                        .iter()
                        .position(|t| trim_eq(t, p))
                        .ok_or_else(|| format!("positive_token {p:?} is not Yes/No"))?;
                    if v.positive_index == 1 {
                        v.id = "yes_no:No".into();
                    }
                }
                Ok(v)
            }
            VerbalizerKind::ClassNames => {
                let positive = match &self.positive_token {
                    Some(p) => labels
                        .names()
                        .iter()
                        .position(|n| trim_eq(n, p))
                        .ok_or_else(|| format!("positive_token {p:?} is not a class name"))?,
                    None if labels.len() == 2 => 1,
                    None => return Err("class_names needs positive_token when there are more than 2 classes".into()),
                };
                Verbalizer::class_names(labels, positive, leading_space).map_err(|e| e.to_string())
            }
            VerbalizerKind::TokenMap => {
                let map = self
                    .token_map
                    .as_ref()
                    .ok_or("token_map verbalizer needs a token_map")?;
                let tokens: Vec<String> = map.keys().cloned().collect();
                let positives: Vec<usize> = map
                    .values()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(i, _)| i)
                    .collect();
                let [positive] = positives[..] else {
                    return Err("token_map needs exactly one token mapped to 1".into());
                };
                let id = format!("token_map:{}", tokens.join("|"));
                Verbalizer::new(id, VerbalizerKind::TokenMap, tokens, positive).map_err(|e| e.to_string())
            }
        }
    }
}

/// Prompts from an instruction file, deduplicated by id; the second return value lists a
/// warning per dropped duplicate.
pub fn load_instruction_prompts(
    path: impl AsRef<Path>,
    labels: &LabelSpace,
    leading_space: bool,
) -> Result<(Vec<PromptSpec>, Vec<String>), PromptError> {
    let path = path.as_ref();
    let file_err = |message: String| PromptError::File {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let raw: Vec<serde_json::Value> = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut prompts = Vec::new();
    let mut warnings = Vec::new();
    for (index, value) in raw.into_iter().enumerate() {
        let entry_err = |message: String| PromptError::Entry { index, message };
        let entry: InstructionEntry = serde_json::from_value(value).map_err(|e| entry_err(e.to_string()))?;
        if !entry.template.contains(INPUT_SLOT) {
            return Err(entry_err(format!("template is missing {INPUT_SLOT}")));
        }
        let verbalizer = entry.verbalizer(labels, leading_space).map_err(entry_err)?;
        let spec = PromptSpec::new(PromptKind::Instruction, entry.template, Vec::new(), verbalizer)
            .map_err(|e| entry_err(e.to_string()))?;
        if seen.insert(spec.id.clone()) {
            prompts.push(spec);
        } else {
            warnings.push(format!("entry {index}: duplicate of prompt {}, skipped", spec.id));
        }
    }
    Ok((prompts, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Example, SplitTag};
    use std::io::Write;

    fn train(counts: &[usize]) -> Dataset {
        let names: Vec<String> = (0..counts.len()).map(|c| format!("c{c}")).collect();
        let mut examples = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                examples.push(Example {
                    id: examples.len() as u64,
                    text: format!("text {c}-{i}"),
                    label: c,
                });
            }
        }
        Dataset {
            examples,
            labels: LabelSpace::new(names).unwrap(),
            split_tag: SplitTag::Train,
            warnings: vec![],
        }
    }

    fn sampler(n: usize, shots: usize, seed: u64) -> FewShotSampler {
        FewShotSampler {
            n_prompts: n,
            shots_per_class: shots,
            seed,
            ..FewShotSampler::default()
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = train(&[6, 6]);
        let a = sample_fewshot_prompts(&d, &sampler(3, 1, 3)).unwrap();
        let b = sample_fewshot_prompts(&d, &sampler(3, 1, 3)).unwrap();
        assert_eq!(a, b);
        let c = sample_fewshot_prompts(&d, &sampler(3, 1, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn demonstrations_alternate_classes() {
        let d = train(&[5, 5]);
        for p in sample_fewshot_prompts(&d, &sampler(4, 2, 0)).unwrap() {
            let labels: Vec<&str> = p.demonstrations.iter().map(|d| d.label.as_str()).collect();
            assert_eq!(labels, ["c0", "c1", "c0", "c1"]);
            let texts: HashSet<&str> = p.demonstrations.iter().map(|d| d.text.as_str()).collect();
            assert_eq!(texts.len(), 4, "no replacement within a prompt");
        }
    }

    #[test]
    fn too_few_examples_names_class() {
        let d = train(&[6, 3]);
        match sample_fewshot_prompts(&d, &sampler(1, 5, 0)) {
            Err(PromptError::TooFewExamples { class, available, needed }) => {
                assert_eq!((class.as_str(), available, needed), ("c1", 3, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn class_name_verbalizers_rotate_for_multiclass() {
        let d = train(&[2, 2, 2]);
        let prompts = sample_fewshot_prompts(&d, &sampler(3, 1, 0)).unwrap();
        let positives: Vec<usize> = prompts.iter().map(|p| p.verbalizer.positive_index).collect();
        assert_eq!(positives, vec![0, 1, 2]);
    }

    #[test]
    fn render_instruction() {
        let p = PromptSpec::new(PromptKind::Instruction, "Q: {input} A:", vec![], Verbalizer::yes_no(true)).unwrap();
        assert_eq!(render(&p, "the film is flat ."), "Q: the film is flat . A:");
    }

    #[test]
    fn render_fewshot() {
        let demos = vec![
            Demonstration { text: "awful".into(), label: "negative".into() },
            Demonstration { text: "lovely".into(), label: "positive".into() },
        ];
        let p = PromptSpec::new(PromptKind::Fewshot, DEFAULT_FEWSHOT_TEMPLATE, demos, Verbalizer::yes_no(true)).unwrap();
        let out = p.render("fine");
        assert_eq!(out.matches("Input:").count(), 3);
        assert!(out.ends_with("Output:"));
        assert_eq!(
            out,
            "Input: awful\nOutput: negative\n\nInput: lovely\nOutput: positive\n\nInput: fine\nOutput:"
        );
    }

    #[test]
    fn ids_are_content_hashes() {
        let a = PromptSpec::new(PromptKind::Instruction, "A {input}", vec![], Verbalizer::yes_no(true)).unwrap();
        let b = PromptSpec::new(PromptKind::Instruction, "A {input}", vec![], Verbalizer::yes_no(true)).unwrap();
        let c = PromptSpec::new(PromptKind::Instruction, "B {input}", vec![], Verbalizer::yes_no(true)).unwrap();
        let d = PromptSpec::new(PromptKind::Instruction, "A {input}", vec![], Verbalizer::yes_no(false)).unwrap();
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
        assert_ne!(a.id, d.id);
        assert_eq!(a.id.len(), 16);
    }

    fn write_entries(json: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(json.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_instruction_file_in_order() {
        let entries: Vec<String> = (0..10)
            .map(|i| format!(r#"{{"template": "Question {i}: {{input}}", "verbalizer": "yes_no"}}"#))
            .collect();
        let f = write_entries(&format!("[{}]", entries.join(",")));
        let labels = LabelSpace::new(["neg", "pos"]).unwrap();
        let (prompts, warnings) = load_instruction_prompts(f.path(), &labels, true).unwrap();
        assert_eq!(prompts.len(), 10);
        assert!(warnings.is_empty());
        assert!(prompts[3].template.starts_with("Question 3"));
    }

    #[test]
    fn duplicates_are_dropped_with_warning() {
        let f = write_entries(
            r#"[{"template": "Is the underlying emotion of this tweet love? {input}", "verbalizer": "yes_no"},
                {"template": "Is the underlying emotion of this tweet love? {input}", "verbalizer": "yes_no"}]"#,
        );
        let labels = LabelSpace::new(["joy", "love", "sadness"]).unwrap();
        let (prompts, warnings) = load_instruction_prompts(f.path(), &labels, true).unwrap();
        assert_eq!(prompts.len(), 1);
        assert_eq!(prompts[0].kind, PromptKind::Instruction);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn missing_slot_reports_entry_index() {
        let f = write_entries(
            r#"[{"template": "ok {input}", "verbalizer": "yes_no"},
                {"template": "no slot here", "verbalizer": "yes_no"}]"#,
        );
        let labels = LabelSpace::new(["neg", "pos"]).unwrap();
        assert!(matches!(
            load_instruction_prompts(f.path(), &labels, true),
            Err(PromptError::Entry { index: 1, .. })
        ));
    }

    #[test]
    fn verbalizer_bindings() {
        let labels = LabelSpace::new(["anger", "joy", "love"]).unwrap();
        let f = write_entries(
            r#"[{"template": "{input} emotion:", "verbalizer": "class_names", "positive_token": "love"},
                {"template": "{input} Sentiment?", "verbalizer": "token_map", "token_map": {" good": 1, " bad": 0}},
                {"template": "Not happy? {input}", "verbalizer": "yes_no", "positive_token": "No"}]"#,
        );
        let (prompts, _) = load_instruction_prompts(f.path(), &labels, true).unwrap();
        assert_eq!(prompts[0].verbalizer.positive_index, 2);
        assert_eq!(prompts[1].verbalizer.tokens, [" bad", " good"]);
        assert_eq!(prompts[1].verbalizer.positive_index, 1);
        assert_eq!(prompts[2].verbalizer.positive_index, 1);

        let bad = write_entries(r#"[{"template": "{input}", "verbalizer": "class_names"}]"#);
        assert!(matches!(
            load_instruction_prompts(bad.path(), &labels, true),
            Err(PromptError::Entry { index: 0, .. })
        ));
    }
}
