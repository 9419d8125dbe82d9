//! Feature matrix: cached LM output per (prompt, example) cell.
//!
//! Each cell keeps the raw probability vector over the prompt's verbalizer tokens. The bit is
//! always recomputed from that vector and the verbalizer, so changing a tie rule never requires
//! re-querying the LM. Cells are write-once.
//!
//! On disk a matrix is a directory holding `meta.json` and an append-only `cells.jsonl`, one
//! record per line: `{"prompt_id", "example_id", "probs", "bit"}`. A truncated trailing line
//! (from an interrupted run) is ignored on load.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Verbalizer;

pub const META_FILE: &str = "meta.json";
pub const CELLS_FILE: &str = "cells.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("prompt {0} is not registered in the feature matrix")]
    UnknownPrompt(String),
    #[error("cell ({prompt_id}, {example_id}) already holds a different value")]
    Conflict { prompt_id: String, example_id: u64 },
    #[error("prompt {0} is registered with a different verbalizer")]
    VerbalizerMismatch(String),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend_id: String,
    pub model: String,
    /// Seconds since the Unix epoch at creation.
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub prompt_ids: Vec<String>,
    pub verbalizers: BTreeMap<String, Verbalizer>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    prompt_id: String,
    example_id: u64,
    probs: Vec<f64>,
    bit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub probs: Vec<f64>,
    pub bit: bool,
}

impl Cell {
    /// Word-matching abstentions are stored as all-zero vectors.
    pub fn is_abstain(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Written,
    /// The cell already held exactly this value.
    Unchanged,
}

pub struct FeatureMatrix {
    meta: RwLock<FeatureMeta>,
    cells: RwLock<HashMap<(String, u64), Vec<f64>>>,
    dir: Option<PathBuf>,
    log: Option<Mutex<BufWriter<File>>>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl FeatureMatrix {
    pub fn in_memory(backend_id: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            meta: RwLock::new(FeatureMeta {
                prompt_ids: Vec::new(),
                verbalizers: BTreeMap::new(),
                provenance: Provenance {
                    backend_id: backend_id.into(),
                    model: model.into(),
                    created_unix: now_unix(),
                },
            }),
            cells: RwLock::new(HashMap::new()),
            dir: None,
            log: None,
        }
    }

    /// Open the matrix stored in `dir`, creating it if it does not exist.
    pub fn open(dir: impl AsRef<Path>, backend_id: &str, model: &str) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let meta_path = dir.join(META_FILE);
        let meta = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
            serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: meta_path.display().to_string(),
                message: e.to_string(),
            })?
        } else {
            FeatureMeta {
                prompt_ids: Vec::new(),
                verbalizers: BTreeMap::new(),
                provenance: Provenance {
                    backend_id: backend_id.into(),
                    model: model.into(),
                    created_unix: now_unix(),
                },
            }
        };

        let cells_path = dir.join(CELLS_FILE);
        let mut cells = HashMap::new();
        if cells_path.exists() {
            let text = fs::read_to_string(&cells_path).map_err(io_err(&cells_path))?;
            let lines: Vec<&str> = text.lines().collect();
            let mut torn = !text.is_empty() && !text.ends_with('\n');
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CellRecord>(line) {
                    Ok(rec) => {
                        cells.insert((rec.prompt_id, rec.example_id), rec.probs);
                    }
                    Err(_) if i + 1 == lines.len() => {
                        log::warn!("{}: ignoring truncated final record", cells_path.display());
                        torn = true;
                    }
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            path: cells_path.display().to_string(),
                            message: format!("line {}: {e}", i + 1),
                        })
                    }
                }
            }
            if torn {
                // Drop the torn tail so later appends start on a fresh line.
                let kept: String = lines
                    .iter()
                    .filter(|l| serde_json::from_str::<CellRecord>(l).is_ok())
                    .flat_map(|l| [*l, "\n"])
                    .collect();
                fs::write(&cells_path, kept).map_err(io_err(&cells_path))?;
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&cells_path)
            .map_err(io_err(&cells_path))?;
        let store = Self {
            meta: RwLock::new(meta),
            cells: RwLock::new(cells),
            dir: Some(dir.to_path_buf()),
            log: Some(Mutex::new(BufWriter::new(file))),
        };
        store.save_meta()?;
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn meta(&self) -> FeatureMeta {
        self.meta.read().expect("meta lock poisoned").clone()
    }

    pub fn prompt_ids(&self) -> Vec<String> {
        self.meta.read().expect("meta lock poisoned").prompt_ids.clone()
    }

    pub fn verbalizer(&self, prompt_id: &str) -> Option<Verbalizer> {
        self.meta
            .read()
            .expect("meta lock poisoned")
            .verbalizers
            .get(prompt_id)
            .cloned()
    }

    pub fn save_meta(&self) -> Result<(), StoreError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(META_FILE);
            let json = serde_json::to_string_pretty(&*self.meta.read().expect("meta lock poisoned"))
                .expect("meta serializes");
            fs::write(&path, json + "\n").map_err(io_err(&path))?;
        }
        Ok(())
    }

    /// Add a prompt column. Re-registering with the same verbalizer is a no-op.
    pub fn register_prompt(&self, prompt_id: &str, verbalizer: &Verbalizer) -> Result<(), StoreError> {
        verbalizer.validate()?;
        {
            let mut meta = self.meta.write().expect("meta lock poisoned");
            match meta.verbalizers.get(prompt_id) {
                Some(existing) if existing == verbalizer => return Ok(()),
                Some(_) => return Err(StoreError::VerbalizerMismatch(prompt_id.into())),
                None => {
                    meta.prompt_ids.push(prompt_id.into());
                    meta.verbalizers.insert(prompt_id.into(), verbalizer.clone());
                }
            }
        }
        self.save_meta()
    }

    /// Write a cell. A second write with an identical vector is a no-op; a different vector is
    /// rejected.
    pub fn write(&self, prompt_id: &str, example_id: u64, probs: Vec<f64>) -> Result<WriteOutcome, StoreError> {
        let verbalizer = self
            .verbalizer(prompt_id)
            .ok_or_else(|| StoreError::UnknownPrompt(prompt_id.into()))?;
        let bit = verbalizer.decide(&probs)?;
        let key = (prompt_id.to_string(), example_id);
        let mut cells = self.cells.write().expect("cells lock poisoned");
        if let Some(existing) = cells.get(&key) {
            return if *existing == probs {
                Ok(WriteOutcome::Unchanged)
            } else {
                Err(StoreError::Conflict {
                    prompt_id: key.0,
                    example_id,
                })
            };
        }
        if let (Some(log), Some(dir)) = (&self.log, &self.dir) {
            let rec = CellRecord {
                prompt_id: key.0.clone(),
                example_id,
                probs: probs.clone(),
                bit,
            };
            let path = dir.join(CELLS_FILE);
            let mut log = log.lock().expect("log lock poisoned");
            serde_json::to_writer(&mut *log, &rec).expect("record serializes");
            log.write_all(b"\n").map_err(io_err(&path))?;
            log.flush().map_err(io_err(&path))?;
        }
        cells.insert(key, probs);
        Ok(WriteOutcome::Written)
    }

    /// Cell value with the bit recomputed from the stored vector. `None` for unwritten cells.
    pub fn get(&self, prompt_id: &str, example_id: u64) -> Option<Cell> {
        let probs = self
            .cells
            .read()
            .expect("cells lock poisoned")
            .get(&(prompt_id.to_string(), example_id))
            .cloned()?;
        let verbalizer = self.verbalizer(prompt_id)?;
        let bit = verbalizer.decide(&probs).ok()?;
        Some(Cell { probs, bit })
    }

    pub fn contains(&self, prompt_id: &str, example_id: u64) -> bool {
        self.cells
            .read()
            .expect("cells lock poisoned")
            .contains_key(&(prompt_id.to_string(), example_id))
    }

    pub fn len(&self) -> usize {
        self.cells.read().expect("cells lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells among `prompt_ids × example_ids` that have not been written, in row-major order.
    pub fn missing(&self, prompt_ids: &[String], example_ids: &[u64]) -> Vec<(String, u64)> {
        let cells = self.cells.read().expect("cells lock poisoned");
        prompt_ids
            .iter()
            .flat_map(|p| example_ids.iter().map(move |&e| (p.clone(), e)))
            .filter(|key| !cells.contains_key(key))
            .collect()
    }

    /// Bit columns for `prompt_ids` over `example_ids`, or the first missing cell.
    pub fn bit_columns(&self, prompt_ids: &[String], example_ids: &[u64]) -> Result<Vec<Vec<bool>>, (String, u64)> {
        prompt_ids
            .iter()
            .map(|p| {
                example_ids
                    .iter()
                    .map(|&e| self.get(p, e).map(|c| c.bit).ok_or_else(|| (p.clone(), e)))
                    .collect()
            })
            .collect()
    }
}
