//! Stateful front of the pipeline: lexicon curation, run submission and
//! report retrieval over a [`Store`].
//!
//! Runs read a lexicon snapshot taken at submission, so decisions made
//! while a run executes land in the next version without disturbing it.
//! Requests carrying a `request_id` are answered once and replayed after.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexicon::{Category, CurationDecision, Lexicon, LexiconError, LexiconEvent, Term, TermStatus, Verdict};
use crate::pipeline::{execute_run, CorpusInputs, PipelineError, ReportKind, Run, RunConfig, RunStatus};
use crate::store::{RequestRecord, Store, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<LexiconError> for ServiceError {
    fn from(e: LexiconError) -> Self {
        match e {
            LexiconError::UnknownTerm(t) => ServiceError::NotFound(format!("term {t:?}")),
            e @ LexiconError::NotPending { .. } => ServiceError::Conflict(e.to_string()),
            e => ServiceError::BadRequest(e.to_string()),
        }
    }
}

/// A pending term together with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub term: String,
    pub support: f64,
    pub proposed_at_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub term: Term,
    pub lexicon_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSubmission {
    pub run: Run,
    /// True when an identical run had already completed.
    pub cached: bool,
    /// Terms newly added as pending by this submission.
    pub proposed: Vec<String>,
}

pub struct PipelineService {
    store: Store,
    lexicon: RwLock<Arc<Lexicon>>,
    requests: Mutex<BTreeMap<String, RequestRecord>>,
    /// Serializes lexicon writes and the event log.
    write: Mutex<()>,
    /// Serializes run execution.
    runs: Mutex<()>,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl PipelineService {
    /// Opens a workspace, replaying the lexicon log found there.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let store = Store::open(root)?;
        let lexicon = store.load_lexicon()?;
        let requests = store.load_requests()?;
        Ok(Self {
            store,
            lexicon: RwLock::new(Arc::new(lexicon)),
            requests: Mutex::new(requests),
            write: Mutex::new(()),
            runs: Mutex::new(()),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn lexicon(&self) -> Arc<Lexicon> {
        self.lexicon.read().expect("lexicon lock").clone()
    }

    pub fn list_terms(&self, status: Option<TermStatus>) -> Vec<Term> {
        self.lexicon()
            .terms()
            .filter(|t| status.is_none_or(|s| t.status == s))
            .cloned()
            .collect()
    }

    /// Pending terms, highest support first.
    pub fn candidates(&self) -> Vec<Candidate> {
        let lex = self.lexicon();
        let mut origin = BTreeMap::new();
        for e in lex.history() {
            if let LexiconEvent::Proposed(p) = e {
                origin.insert(p.term.as_str(), p);
            }
        }
        let mut out: Vec<Candidate> = lex
            .terms_with_status(TermStatus::Pending)
            .map(|t| {
                let p = origin.get(t.text.as_str());
                Candidate {
                    term: t.text.clone(),
                    support: t.support_at_proposal.unwrap_or(0.0),
                    proposed_at_version: p.map_or(t.version_added, |p| p.version),
                    run_id: p.and_then(|p| p.run_id.clone()),
                }
            })
            .collect();
        out.sort_by(|a, b| b.support.total_cmp(&a.support).then_with(|| a.term.cmp(&b.term)));
        out
    }

    fn replayed(&self, request_id: Option<&str>, kind: &str) -> Result<Option<Value>, ServiceError> {
        let Some(id) = request_id else { return Ok(None) };
        match self.requests.lock().expect("request lock").get(id) {
            Some(r) if r.kind == kind => Ok(Some(r.response.clone())),
            Some(r) => Err(ServiceError::Conflict(format!("request id {id:?} was used for {}", r.kind))),
            None => Ok(None),
        }
    }

    fn remember(&self, request_id: Option<&str>, kind: &str, response: &impl Serialize) -> Result<(), ServiceError> {
        let Some(id) = request_id else { return Ok(()) };
        let record = RequestRecord {
            request_id: id.to_string(),
            kind: kind.to_string(),
            response: serde_json::to_value(response).expect("response serializes"),
        };
        self.store.append_request(&record)?;
        self.requests.lock().expect("request lock").insert(id.to_string(), record);
        Ok(())
    }

    /// Applies one curation decision as its own version bump.
    pub fn decide(
        &self,
        term: &str,
        verdict: Verdict,
        category: Option<Category>,
        actor: &str,
        request_id: Option<&str>,
    ) -> Result<DecisionOutcome, ServiceError> {
        let _guard = self.write.lock().expect("write lock");
        if let Some(v) = self.replayed(request_id, "decision")? {
            return serde_json::from_value(v).map_err(|e| ServiceError::BadRequest(e.to_string()));
        }
        let decision = match verdict {
            Verdict::Accept => {
                let c = category.ok_or_else(|| ServiceError::BadRequest("accept needs a category".into()))?;
                CurationDecision::accept(term, c, now_secs(), actor)
            }
            Verdict::Reject => CurationDecision::reject(term, now_secs(), actor),
            Verdict::Ban => CurationDecision::ban(term, now_secs(), actor),
        };
        let current = self.lexicon();
        let next = current.apply_decisions(&[decision])?;
        self.store.append_events(&next.history()[current.history().len()..])?;
        let outcome = DecisionOutcome {
            term: next.get(term).expect("decided term exists").clone(),
            lexicon_version: next.version(),
        };
        *self.lexicon.write().expect("lexicon lock") = Arc::new(next);
        self.remember(request_id, "decision", &outcome)?;
        Ok(outcome)
    }

    /// Resolves a corpus reference: an imported corpus name, else a path.
    pub fn resolve_corpus(&self, corpus: &str) -> Result<PathBuf, ServiceError> {
        let named = self.store.corpus_dir(corpus);
        let simple = !corpus.contains(['/', '\\']) && !corpus.starts_with('.');
        if simple && named.join("posts.jsonl").exists() {
            return Ok(named);
        }
        let path = Path::new(corpus);
        if path.join("posts.jsonl").exists() {
            return Ok(path.to_path_buf());
        }
        Err(ServiceError::NotFound(format!("corpus {corpus:?}")))
    }

    /// Runs the pipeline on a corpus against the current lexicon.
    ///
    /// A completed run with the same inputs is returned as is. Otherwise the
    /// run's candidates are merged into the lexicon that is current when it
    /// finishes.
    pub fn submit_run(&self, corpus: &str, config: RunConfig, request_id: Option<&str>) -> Result<RunSubmission, ServiceError> {
        let _run_guard = self.runs.lock().expect("run lock");
        if let Some(v) = self.replayed(request_id, "run")? {
            return serde_json::from_value(v).map_err(|e| ServiceError::BadRequest(e.to_string()));
        }
        let dir = self.resolve_corpus(corpus)?;
        let inputs = CorpusInputs::load(&dir)?;
        let snapshot = self.lexicon();
        let id = crate::pipeline::run_id(&inputs.digest, &snapshot, &config);
        if let Some(run) = self.store.load_run(&id)? {
            if run.status == RunStatus::Completed {
                let sub = RunSubmission {
                    run,
                    cached: true,
                    proposed: Vec::new(),
                };
                self.remember(request_id, "run", &sub)?;
                return Ok(sub);
            }
        }
        log::info!("run {id} on {} at lexicon v{}", dir.display(), snapshot.version());
        let outcome = execute_run(&inputs, &snapshot, &config);
        self.store.save_run(&outcome)?;
        let proposed = {
            let _guard = self.write.lock().expect("write lock");
            let current = self.lexicon();
            let next = current.with_proposals(&outcome.candidates, Some(&id));
            let new_events = &next.history()[current.history().len()..];
            self.store.append_events(new_events)?;
            let proposed = new_events
                .iter()
                .filter_map(|e| match e {
                    LexiconEvent::Proposed(p) => Some(p.term.clone()),
                    LexiconEvent::Decided(_) => None,
                })
                .collect();
            *self.lexicon.write().expect("lexicon lock") = Arc::new(next);
            proposed
        };
        let sub = RunSubmission {
            run: outcome.run,
            cached: false,
            proposed,
        };
        self.remember(request_id, "run", &sub)?;
        Ok(sub)
    }

    pub fn get_run(&self, run_id: &str) -> Result<Run, ServiceError> {
        self.store
            .load_run(run_id)?
            .ok_or_else(|| ServiceError::NotFound(format!("run {run_id:?}")))
    }

    pub fn list_runs(&self) -> Result<Vec<Run>, ServiceError> {
        Ok(self.store.list_runs()?)
    }

    pub fn get_report(&self, run_id: &str, kind: ReportKind) -> Result<Value, ServiceError> {
        self.get_run(run_id)?;
        self.store
            .read_run_json(run_id, &kind.file_name())?
            .ok_or_else(|| ServiceError::NotFound(format!("{kind} report for run {run_id:?}")))
    }

    pub fn clusters_geojson(&self, run_id: &str) -> Result<Value, ServiceError> {
        self.get_run(run_id)?;
        self.store
            .read_run_json(run_id, "clusters.geojson")?
            .ok_or_else(|| ServiceError::NotFound(format!("clusters for run {run_id:?}")))
    }
}
