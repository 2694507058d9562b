//! On-disk layout of a pipeline workspace.
//!
//! ```text
//! lexicon/seed.txt         seed dictionary
//! lexicon/categories.tsv   category overlay
//! lexicon/events.jsonl     append-only proposal and decision log
//! requests.jsonl           responses keyed by client request id
//! corpora/<name>/          imported corpora
//! runs/<run_id>/           run.json, reports, candidates, itemsets
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{ingest, IngestReport};
use crate::itemsets::write_itemsets_jsonl;
use crate::lexicon::{Lexicon, LexiconError, LexiconEvent, SHIPPED_CATEGORIES, SHIPPED_SEED};
use crate::pipeline::{Report, Run, RunOutcome};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("invalid name {0:?}")]
    Name(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A stored response to a client request, replayed on retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub kind: String,
    pub response: Value,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens `root`, creating the layout and shipped lexicon files if absent.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = Self { root: root.into() };
        for dir in [store.lexicon_dir(), store.root.join("runs"), store.root.join("corpora")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        for (name, body) in [("seed.txt", SHIPPED_SEED), ("categories.tsv", SHIPPED_CATEGORIES)] {
            let path = store.lexicon_dir().join(name);
            if !path.exists() {
                fs::write(&path, body).map_err(io_err(&path))?;
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lexicon_dir(&self) -> PathBuf {
        self.root.join("lexicon")
    }

    fn events_path(&self) -> PathBuf {
        self.lexicon_dir().join("events.jsonl")
    }

    fn requests_path(&self) -> PathBuf {
        self.root.join("requests.jsonl")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn corpus_dir(&self, name: &str) -> PathBuf {
        self.root.join("corpora").join(name)
    }

    /// Seed plus overlay, before any history.
    pub fn base_lexicon(&self) -> Result<Lexicon, StoreError> {
        let read = |name: &str| {
            let path = self.lexicon_dir().join(name);
            fs::read_to_string(&path).map_err(io_err(&path))
        };
        Ok(Lexicon::load_seed(&read("seed.txt")?)?.with_overlay(&read("categories.tsv")?)?)
    }

    /// The current lexicon: base replayed through the event log.
    pub fn load_lexicon(&self) -> Result<Lexicon, StoreError> {
        let base = self.base_lexicon()?;
        let events: Vec<LexiconEvent> = read_jsonl(&self.events_path())?;
        Ok(Lexicon::replay(&base, &events)?)
    }

    pub fn append_events(&self, events: &[LexiconEvent]) -> Result<(), StoreError> {
        append_jsonl(&self.events_path(), events)
    }

    pub fn load_requests(&self) -> Result<BTreeMap<String, RequestRecord>, StoreError> {
        let records: Vec<RequestRecord> = read_jsonl(&self.requests_path())?;
        Ok(records.into_iter().map(|r| (r.request_id.clone(), r)).collect())
    }

    pub fn append_request(&self, record: &RequestRecord) -> Result<(), StoreError> {
        append_jsonl(&self.requests_path(), std::slice::from_ref(record))
    }

    /// Copies a corpus directory under `corpora/<name>` and ingests its posts.
    pub fn import_corpus(&self, name: &str, src: &Path) -> Result<IngestReport, StoreError> {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || name.starts_with('.') {
            return Err(StoreError::Name(name.to_string()));
        }
        let dest = self.corpus_dir(name);
        fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        let mut report = IngestReport::default();
        for file in ["posts.jsonl", "faces.jsonl", "follows.csv", "nodes.jsonl", "venues.jsonl"] {
            let from = src.join(file);
            if !from.exists() {
                continue;
            }
            if file == "posts.jsonl" {
                let reader = BufReader::new(File::open(&from).map_err(io_err(&from))?);
                let (corpus, r) = ingest(reader);
                report = r;
                let to = dest.join(file);
                let w = BufWriter::new(File::create(&to).map_err(io_err(&to))?);
                corpus.write_jsonl(w).map_err(io_err(&to))?;
            } else {
                let to = dest.join(file);
                fs::copy(&from, &to).map_err(io_err(&to))?;
            }
        }
        Ok(report)
    }

    pub fn load_run(&self, run_id: &str) -> Result<Option<Run>, StoreError> {
        if !valid_id(run_id) {
            return Ok(None);
        }
        let path = self.run_dir(run_id).join("run.json");
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })
    }

    pub fn list_runs(&self) -> Result<Vec<Run>, StoreError> {
        let dir = self.root.join("runs");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        let mut runs = Vec::new();
        for id in ids {
            if let Some(run) = self.load_run(&id)? {
                runs.push(run);
            }
        }
        runs.sort_by(|a, b| a.started_at.cmp(&b.started_at).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(runs)
    }

    /// Writes a finished run. `run.json` goes last so a partial directory
    /// is never mistaken for a completed run.
    pub fn save_run(&self, outcome: &RunOutcome) -> Result<(), StoreError> {
        let dir = self.run_dir(&outcome.run.run_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        if let Some(bundle) = &outcome.bundle {
            bundle.write(&dir).map_err(|e| StoreError::Io {
                path: dir.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            })?;
        }
        let candidates = Report {
            run_id: outcome.run.run_id.clone(),
            lexicon_version: outcome.run.lexicon_version_used,
            body: CandidateList {
                candidates: outcome.candidates.clone(),
            },
        };
        write_pretty(&dir.join("candidates.json"), &candidates)?;
        let path = dir.join("itemsets.jsonl");
        let w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        write_itemsets_jsonl(w, &outcome.itemsets).map_err(io_err(&path))?;
        write_pretty(&dir.join("run.json"), &outcome.run)
    }

    /// A file from a run directory parsed as JSON.
    pub fn read_run_json(&self, run_id: &str, file: &str) -> Result<Option<Value>, StoreError> {
        if !valid_id(run_id) {
            return Ok(None);
        }
        let path = self.run_dir(run_id).join(file);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub candidates: Vec<crate::lexicon::Term>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric())
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("record serializes");
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}
