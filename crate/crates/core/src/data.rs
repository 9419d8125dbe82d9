//! Labeled text datasets: loading, label spaces and stratified splitting.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} contains no records")]
    Empty { path: String },
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("record {index}: unknown label {label:?}")]
    UnknownLabel { index: usize, label: String },
    #[error("invalid label space: {0}")]
    LabelSpace(String),
    #[error("invalid split: {0}")]
    Split(String),
}

/// Ordered class names. The class index of a name is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, DataError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(DataError::LabelSpace(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(DataError::LabelSpace("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::LabelSpace(format!("duplicate class {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Label space inferred from raw labels: distinct names in lexicographic order.
    pub fn infer<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self, DataError> {
        let distinct: BTreeSet<&str> = labels.into_iter().collect();
        Self::new(distinct)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Short content hash used to tie models to the label space they were fit on.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = DataError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: u64,
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guess from the file extension; anything that is not `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub labels: LabelSpace,
    pub split_tag: SplitTag,
    /// Non-fatal issues noticed while building this dataset (e.g. a class left empty by a split).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    text: Option<String>,
    label: Option<serde_json::Value>,
}

fn label_string(value: serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_records(path: &Path, format: DataFormat) -> Result<Vec<(String, String)>, DataError> {
    let content = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        DataFormat::Jsonl => content
            .lines()
            .filter(|line| !line.trim().is_empty())
            .enumerate()
            .map(|(index, line)| {
                let raw: RawRecord = serde_json::from_str(line).map_err(|e| DataError::Record {
                    index,
                    message: e.to_string(),
                })?;
                let text = raw.text.ok_or_else(|| DataError::Record {
                    index,
                    message: "missing `text`".into(),
                })?;
                let label = raw.label.and_then(label_string).ok_or_else(|| DataError::Record {
                    index,
                    message: "missing or non-scalar `label`".into(),
                })?;
                Ok((text, label))
            })
            .collect(),
        DataFormat::Csv => parse_csv(&content),
    }
}

/// Minimal RFC 4180 reader for a `text,label` file (quoted fields, doubled quotes).
fn parse_csv(content: &str) -> Result<Vec<(String, String)>, DataError> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut row = Vec::new();
    let mut field = String::new();
    let mut in_quotes = false;
    let mut chars = content.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    field.push('"');
                    chars.next();
                }
                '"' => in_quotes = false,
                _ => field.push(c),
            }
            continue;
        }
        match c {
            '"' => in_quotes = true,
            ',' => row.push(std::mem::take(&mut field)),
            '\r' => {}
            '\n' => {
                row.push(std::mem::take(&mut field));
                rows.push(std::mem::take(&mut row));
            }
            _ => field.push(c),
        }
    }
    if !field.is_empty() || !row.is_empty() {
        row.push(field);
        rows.push(row);
    }
    rows.retain(|r| !(r.len() == 1 && r[0].trim().is_empty()));

    let mut rows = rows.into_iter();
    let header = rows.next().unwrap_or_default();
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let (text_col, label_col) = match (column("text"), column("label")) {
        (Some(t), Some(l)) => (t, l),
        _ => {
            return Err(DataError::Record {
                index: 0,
                message: "CSV header must contain `text` and `label`".into(),
            })
        }
    };
    rows.enumerate()
        .map(|(index, r)| match (r.get(text_col), r.get(label_col)) {
            (Some(t), Some(l)) => Ok((t.clone(), l.clone())),
            _ => Err(DataError::Record {
                index,
                message: "missing `text` or `label` column".into(),
            }),
        })
        .collect()
}

/// Load a labeled dataset. Ids are assigned in file order starting at 0.
pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DataFormat,
    label_space: Option<LabelSpace>,
    split_tag: SplitTag,
) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let records = read_records(path, format)?;
    if records.is_empty() {
        return Err(DataError::Empty {
            path: path.display().to_string(),
        });
    }
    let labels = match label_space {
        Some(space) => space,
        None => LabelSpace::infer(records.iter().map(|(_, l)| l.as_str()))?,
    };
    let examples = records
        .into_iter()
        .enumerate()
        .map(|(index, (text, label))| {
            let text = text.trim().to_string();
            if text.is_empty() {
                return Err(DataError::Record {
                    index,
                    message: "empty `text`".into(),
                });
            }
            let label = labels
                .index_of(&label)
                .ok_or(DataError::UnknownLabel { index, label })?;
            Ok(Example {
                id: index as u64,
                text,
                label,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        examples,
        labels,
        split_tag,
        warnings: Vec::new(),
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_vec(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    pub fn truncated(&self, limit: usize) -> Dataset {
        Dataset {
            examples: self.examples.iter().take(limit).cloned().collect(),
            ..self.clone()
        }
    }

    /// Write as JSONL with string labels, the same format `load_dataset` reads.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let io_err = |source| DataError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = Vec::new();
        for e in &self.examples {
            let line = serde_json::json!({
                "text": e.text,
                "label": self.labels.name(e.label),
            });
            writeln!(out, "{line}").expect("write to vec");
        }
        fs::write(path, out).map_err(io_err)
    }
}

/// Deterministic stratified split. Each class contributes `floor(fraction * n_c)` examples to
/// the first part; leftover slots (up to `floor(fraction * n)` overall) go to the classes with
/// the largest remainders, and the second part is never left empty when the input has ≥ 2
/// examples. Both parts keep the input order.
pub fn split_dataset(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Split(format!("fraction {fraction} not in (0, 1)")));
    }
    let n = d.len();
    let mut target = (fraction * n as f64).floor() as usize;
    if target < 1 {
        return Err(DataError::Split(format!(
            "fraction {fraction} of {n} examples leaves the first part empty"
        )));
    }
    if target >= n {
        target = n - 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = d.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, e) in d.examples.iter().enumerate() {
        by_class[e.label].push(pos);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }

    let mut quota: Vec<usize> = by_class
        .iter()
        .map(|m| ((fraction * m.len() as f64).floor() as usize).min(m.len()))
        .collect();
    let mut assigned: usize = quota.iter().sum();
    // Largest remainder first, then lower class index.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = fraction * by_class[a].len() as f64 - quota[a] as f64;
        let rb = fraction * by_class[b].len() as f64 - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    while assigned < target {
        let mut progressed = false;
        for &c in &order {
            if assigned < target && quota[c] < by_class[c].len() {
                quota[c] += 1;
                assigned += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut in_first = vec![false; n];
    for (c, members) in by_class.iter().enumerate() {
        for &pos in &members[..quota[c]] {
            in_first[pos] = true;
        }
    }

    let mut warnings = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && quota[c] == 0 {
            warnings.push(format!(
                "class {:?} has no examples in the first split part",
                d.labels.name(c).unwrap_or("?")
            ));
        }
    }

    let part = |keep: bool, warnings: Vec<String>| Dataset {
        examples: d
            .examples
            .iter()
            .zip(&in_first)
            .filter(|(_, &f)| f == keep)
            .map(|(e, _)| e.clone())
            .collect(),
        labels: d.labels.clone(),
        split_tag: d.split_tag,
        warnings,
    };
    let mut second = part(false, Vec::new());
    second.split_tag = SplitTag::Validation;
    Ok((part(true, warnings), second))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy(labels: &[usize]) -> Dataset {
        Dataset {
            examples: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Example {
                    id: i as u64,
                    text: format!("example {i}"),
                    label: l,
                })
                .collect(),
            labels: LabelSpace::new(["a", "b"]).unwrap(),
            split_tag: SplitTag::Train,
            warnings: vec![],
        }
    }

    #[test]
    fn infers_lexicographic_label_order() {
        let f = write_tmp(
            r#"{"text": "good", "label": "pos"}
{"text": "bad", "label": "neg"}
{"text": "fine", "label": "pos"}
{"text": "awful", "label": "neg"}
"#,
            ".jsonl",
        );
        let d = load_dataset(f.path(), DataFormat::Jsonl, None, SplitTag::Train).unwrap();
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.labels.names(), ["neg", "pos"]);
        assert_eq!(d.label_vec(), vec![1, 0, 1, 0]);
        assert_eq!(d.examples.iter().map(|e| e.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn unknown_label_names_record() {
        let f = write_tmp(
            "{\"text\": \"x\", \"label\": \"pos\"}\n{\"text\": \"y\", \"label\": \"mystery\"}\n",
            ".jsonl",
        );
        let space = LabelSpace::new(["neg", "pos"]).unwrap();
        let err = load_dataset(f.path(), DataFormat::Jsonl, Some(space), SplitTag::Train).unwrap_err();
        match err {
            DataError::UnknownLabel { index, label } => {
                assert_eq!(index, 1);
                assert_eq!(label, "mystery");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sst2_style_record() {
        let f = write_tmp(
            "{\"text\": \"that loves its characters and communicates something rather beautiful about human nature\", \"label\": \"positive\"}\n",
            ".jsonl",
        );
        let space = LabelSpace::new(["negative", "positive"]).unwrap();
        let d = load_dataset(f.path(), DataFormat::Jsonl, Some(space), SplitTag::Test).unwrap();
        assert_eq!(d.examples[0].label, 1);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("\n\n", ".jsonl");
        assert!(matches!(
            load_dataset(f.path(), DataFormat::Jsonl, None, SplitTag::Train),
            Err(DataError::Empty { .. })
        ));
    }

    #[test]
    fn csv_with_quotes() {
        let f = write_tmp(
            "text,label\n\"a, quoted \"\"text\"\"\",pos\nplain,neg\n",
            ".csv",
        );
        let d = load_dataset(f.path(), DataFormat::from_path(f.path()), None, SplitTag::Train).unwrap();
        assert_eq!(d.examples[0].text, "a, quoted \"text\"");
        assert_eq!(d.label_vec(), vec![1, 0]);
    }

    #[test]
    fn whitespace_only_text_rejected() {
        let f = write_tmp("{\"text\": \"   \", \"label\": \"a\"}\n{\"text\": \"b\", \"label\": \"b\"}\n", ".jsonl");
        assert!(matches!(
            load_dataset(f.path(), DataFormat::Jsonl, None, SplitTag::Train),
            Err(DataError::Record { index: 0, .. })
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let d = toy(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let a = split_dataset(&d, 0.5, 7).unwrap();
        let b = split_dataset(&d, 0.5, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_keeps_second_part_nonempty() {
        let d = toy(&[0, 1, 0, 1]);
        let (first, second) = split_dataset(&d, 0.999, 1).unwrap();
        assert_eq!(first.len(), 3);
        assert_eq!(second.len(), 1);
    }

    #[test]
    fn split_is_stratified() {
        let d = toy(&[0, 0, 0, 0, 1, 1, 1, 1]);
        let (first, second) = split_dataset(&d, 0.5, 3).unwrap();
        assert_eq!(first.class_counts(), vec![2, 2]);
        assert_eq!(second.class_counts(), vec![2, 2]);
    }

    #[test]
    fn split_warns_on_emptied_class() {
        let d = toy(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        let (first, _) = split_dataset(&d, 0.5, 3).unwrap();
        assert_eq!(first.class_counts(), vec![5, 0]);
        assert_eq!(first.warnings.len(), 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let d = toy(&[0, 1, 1, 0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        d.save_jsonl(&path).unwrap();
        let back = load_dataset(&path, DataFormat::Jsonl, Some(d.labels.clone()), SplitTag::Train).unwrap();
        assert_eq!(back, d);
    }

    proptest::proptest! {
        #[test]
        fn split_partitions_input(labels in proptest::collection::vec(0usize..2, 2..40), frac in 0.05f64..0.95, seed in 0u64..1000) {
            let d = toy(&labels);
            proptest::prop_assume!((frac * d.len() as f64).floor() >= 1.0);
            let (a, b) = split_dataset(&d, frac, seed).unwrap();
            let mut ids: Vec<u64> = a.examples.iter().chain(&b.examples).map(|e| e.id).collect();
            ids.sort();
            proptest::prop_assert_eq!(ids, (0..d.len() as u64).collect::<Vec<_>>());
            proptest::prop_assert!(!b.is_empty());
        }
    }
}
