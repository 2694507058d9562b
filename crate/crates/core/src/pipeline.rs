//! One mining round: ingest, classify, mine, propose, report.
//!
//! [`execute_run`] is a pure function of its inputs, the lexicon snapshot
//! and the configuration. Persistence and lexicon updates live in
//! [`crate::service`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{build_nondrug_cohort, classify_posts, extract_candidate_users, selfie_filter, ClassificationConfig};
use crate::corpus::{ingest, Cohort, Corpus, IngestReport, Post};
use crate::demographics::{
    aggregate_user, cohort_report, DemographicReport, FaceFixtureLine, StubFaceProvider, UserDemographics,
    DEFAULT_PROVIDER_SIGMA,
};
use crate::geospatial::{
    categorize_venues, cluster_hotspots, clusters_geojson, BoundingBox, Cluster, ClusterConfig, GeoPoint,
    GeocoderRule, StubGeocoder, VenueReport,
};
use crate::itemsets::{apriori, followed_accounts_transactions, rules, AssociationRule, ItemSet, Transaction};
use crate::lexicon::{DrugClass, Lexicon, Term};
use crate::network::{build_graph, network_report, BuildReport, NetworkConfig, NetworkReport, NodeMeta};
use crate::temporal::{detect_peaks, divergence_from_baseline, histogram, BaselineProfile, TimeMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Survey prevalence shares used for the popularity comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShares {
    pub weed: f64,
    pub syrup: f64,
    pub pills: f64,
}

impl Default for ClassShares {
    fn default() -> Self {
        Self {
            weed: 0.72,
            syrup: 0.14,
            pills: 0.13,
        }
    }
}

impl ClassShares {
    pub fn get(&self, c: DrugClass) -> f64 {
        match c {
            DrugClass::Weed => self.weed,
            DrugClass::Syrup => self.syrup,
            DrugClass::Pills => self.pills,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let v = [self.weed, self.syrup, self.pills];
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(PipelineError::Config("survey shares must be non-negative".into()));
        }
        let sum: f64 = v.iter().sum();
        if sum > 1.0 + 1e-9 {
            return Err(PipelineError::Config(format!("survey shares sum to {sum}, more than 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub classification: ClassificationConfig,
    /// Support threshold for mining drug-post hashtags and for proposals.
    pub min_support: f64,
    pub max_k: Option<usize>,
    pub peak_prominence: f64,
    pub survey_shares: Option<ClassShares>,
    pub baseline: Option<BaselineProfile>,
    pub validation_region: Option<BoundingBox>,
    pub cluster: ClusterConfig,
    pub interest_min_support: f64,
    pub interest_min_confidence: f64,
    pub interest_max_k: Option<usize>,
    pub provider_sigma: f64,
    pub network: NetworkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            classification: ClassificationConfig::default(),
            min_support: crate::lexicon::DEFAULT_PROPOSAL_SUPPORT,
            max_k: Some(3),
            peak_prominence: crate::temporal::DEFAULT_PEAK_PROMINENCE,
            survey_shares: Some(ClassShares::default()),
            baseline: None,
            // contiguous United States
            validation_region: Some(BoundingBox::new(24.396308, -124.848974, 49.384358, -66.885444)),
            cluster: ClusterConfig::default(),
            interest_min_support: 0.1,
            interest_min_confidence: 0.5,
            interest_max_k: Some(4),
            provider_sigma: DEFAULT_PROVIDER_SIGMA,
            network: NetworkConfig::default(),
        }
    }
}

/// A corpus and its optional sidecars.
#[derive(Debug, Clone, Default)]
pub struct CorpusInputs {
    pub posts_jsonl: Vec<u8>,
    pub faces: Option<Vec<FaceFixtureLine>>,
    pub edges: Option<Vec<(String, String)>>,
    pub nodes: Vec<NodeMeta>,
    pub venues: Option<Vec<GeocoderRule>>,
    /// Content digest over every input file.
    pub digest: String,
}

const SIDE_FILES: [&str; 4] = ["faces.jsonl", "follows.csv", "nodes.jsonl", "venues.jsonl"];

impl CorpusInputs {
    pub fn from_posts(posts_jsonl: Vec<u8>) -> Self {
        let mut h = Sha256::new();
        h.update(b"posts.jsonl\n");
        h.update(&posts_jsonl);
        Self {
            posts_jsonl,
            digest: hex::encode(h.finalize()),
            ..Default::default()
        }
    }

    /// Loads `posts.jsonl` plus any of `faces.jsonl`, `follows.csv`,
    /// `nodes.jsonl` and `venues.jsonl` found beside it.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let posts_path = dir.join("posts.jsonl");
        let posts = fs::read(&posts_path).map_err(io_err(&posts_path))?;
        let mut h = Sha256::new();
        h.update(b"posts.jsonl\n");
        h.update(&posts);
        let mut inputs = Self {
            posts_jsonl: posts,
            ..Default::default()
        };
        for name in SIDE_FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            h.update(format!("{name}\n").as_bytes());
            h.update(&bytes);
            let bad = |message: String| PipelineError::Input {
                path: path.display().to_string(),
                message,
            };
            match name {
                "faces.jsonl" => inputs.faces = Some(parse_jsonl(&bytes).map_err(bad)?),
                "follows.csv" => {
                    inputs.edges = Some(crate::network::read_edges_csv(bytes.as_slice()).map_err(|e| bad(e.to_string()))?)
                }
                "nodes.jsonl" => inputs.nodes = parse_jsonl(&bytes).map_err(bad)?,
                _ => inputs.venues = Some(parse_jsonl(&bytes).map_err(bad)?),
            }
        }
        inputs.digest = hex::encode(h.finalize());
        Ok(inputs)
    }
}

fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Classify,
    Mine,
    Propose,
    Reports,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Classify, Stage::Mine, Stage::Propose, Stage::Reports];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    Pending,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: Stage,
    pub state: StageState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub run_id: String,
    pub corpus_digest: String,
    pub lexicon_version_used: u32,
    pub status: RunStatus,
    pub stages: Vec<StageStatus>,
    pub started_at: u64,
    pub finished_at: u64,
    pub metrics: BTreeMap<String, u64>,
    pub config: RunConfig,
}

/// Report body tagged with the run and lexicon version that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub run_id: String,
    pub lexicon_version: u32,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Popularity,
    Temporal,
    Demographics,
    Interests,
    Network,
    Geo,
}

impl ReportKind {
    pub const ALL: [ReportKind; 6] = [
        ReportKind::Popularity,
        ReportKind::Temporal,
        ReportKind::Demographics,
        ReportKind::Interests,
        ReportKind::Network,
        ReportKind::Geo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Popularity => "popularity",
            ReportKind::Temporal => "temporal",
            ReportKind::Demographics => "demographics",
            ReportKind::Interests => "interests",
            ReportKind::Network => "network",
            ReportKind::Geo => "geo",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.as_str())
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown report kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyComparison {
    pub shares: ClassShares,
    /// Survey share times the total drug-post count.
    pub expected: BTreeMap<DrugClass, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityReport {
    pub drug_posts: u64,
    pub unattributed: u64,
    pub class_counts: BTreeMap<DrugClass, u64>,
    /// Sum of the class counts; a multi-class post counts once per class.
    pub total: u64,
    pub shares: BTreeMap<DrugClass, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<SurveyComparison>,
}

/// Per-class counts with the survey columns scaled to the mined total.
pub fn popularity_report(
    class_counts: BTreeMap<DrugClass, u64>,
    drug_posts: u64,
    unattributed: u64,
    survey: Option<ClassShares>,
) -> Result<PopularityReport, PipelineError> {
    if let Some(s) = &survey {
        s.validate()?;
    }
    let total: u64 = class_counts.values().sum();
    let shares = class_counts
        .iter()
        .map(|(c, &n)| (*c, if total == 0 { 0.0 } else { n as f64 / total as f64 }))
        .collect();
    let survey = survey.map(|shares| SurveyComparison {
        expected: DrugClass::ALL.iter().map(|c| (*c, shares.get(*c) * total as f64)).collect(),
        shares,
    });
    Ok(PopularityReport {
        drug_posts,
        unattributed,
        class_counts,
        total,
        shares,
        survey,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeolocationValidation {
    pub region: Option<BoundingBox>,
    pub confirmed_users: u64,
    /// Confirmed users with at least one geotagged drug post.
    pub geo_users: u64,
    /// Of those, users with a geotagged drug post inside the region.
    pub inside: u64,
    pub share_inside: Option<f64>,
}

/// Share of geo-bearing users with a drug post inside `region`.
pub fn geolocation_validation(
    users: &[String],
    drug_posts: &[&Post],
    region: Option<BoundingBox>,
) -> GeolocationValidation {
    let members: BTreeSet<&str> = users.iter().map(String::as_str).collect();
    let mut geo_users = BTreeSet::new();
    let mut inside = BTreeSet::new();
    for p in drug_posts.iter().filter(|p| members.contains(p.user_id.as_str())) {
        if let Some(g) = p.geo {
            geo_users.insert(p.user_id.as_str());
            if region.is_some_and(|r| r.contains(g)) {
                inside.insert(p.user_id.as_str());
            }
        }
    }
    let geo = geo_users.len() as u64;
    GeolocationValidation {
        region,
        confirmed_users: members.len() as u64,
        geo_users: geo,
        inside: inside.len() as u64,
        share_inside: (geo > 0 && region.is_some()).then(|| inside.len() as f64 / geo as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub drug_posts: u64,
    /// Keyed by `all` and each class name.
    pub hourly: BTreeMap<String, Vec<u64>>,
    pub weekday: BTreeMap<String, Vec<u64>>,
    pub hourly_peaks: BTreeMap<String, Vec<usize>>,
    pub weekday_peaks: BTreeMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_divergence: Option<f64>,
    pub geolocation_validation: GeolocationValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicsSection {
    pub provider: bool,
    pub confirmed_users: u64,
    pub summary: DemographicReport,
    pub users: Vec<UserDemographics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestReport {
    pub available: bool,
    pub cohort_users: u64,
    pub min_support: f64,
    pub min_confidence: f64,
    pub frequent_itemsets: u64,
    pub rules: Vec<AssociationRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    pub available: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build: Option<BuildReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<NetworkReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoSection {
    pub geotagged_drug_posts: u64,
    pub config: ClusterConfig,
    pub clusters: Vec<Cluster>,
    pub clustered_posts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venues: Option<VenueReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub popularity: Report<PopularityReport>,
    pub temporal: Report<TemporalReport>,
    pub demographics: Report<DemographicsSection>,
    pub interests: Report<InterestReport>,
    pub network: Report<NetworkSection>,
    pub geo: Report<GeoSection>,
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("reports serialize");
    s.push(b'\n');
    s
}

impl ReportBundle {
    pub fn kind_json(&self, kind: ReportKind) -> Value {
        let v = match kind {
            ReportKind::Popularity => serde_json::to_value(&self.popularity),
            ReportKind::Temporal => serde_json::to_value(&self.temporal),
            ReportKind::Demographics => serde_json::to_value(&self.demographics),
            ReportKind::Interests => serde_json::to_value(&self.interests),
            ReportKind::Network => serde_json::to_value(&self.network),
            ReportKind::Geo => serde_json::to_value(&self.geo),
        };
        v.expect("reports serialize")
    }

    pub fn clusters_geojson(&self) -> Value {
        let mut v = clusters_geojson(&self.geo.body.clusters);
        v["run_id"] = Value::from(self.geo.run_id.clone());
        v["lexicon_version"] = Value::from(self.geo.lexicon_version);
        v
    }

    /// One `<kind>.json` per report plus `clusters.geojson`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for kind in ReportKind::ALL {
            let path = dir.join(kind.file_name());
            fs::write(&path, pretty(&self.kind_json(kind))).map_err(io_err(&path))?;
        }
        let path = dir.join("clusters.geojson");
        fs::write(&path, pretty(&self.clusters_geojson())).map_err(io_err(&path))
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: Run,
    pub bundle: Option<ReportBundle>,
    /// Candidate terms, not yet added to any lexicon.
    pub candidates: Vec<Term>,
    pub itemsets: Vec<ItemSet>,
    pub ingest: IngestReport,
    pub drug_post_ids: Vec<String>,
    pub confirmed_users: Vec<String>,
    pub nondrug_users: Vec<String>,
}

impl RunOutcome {
    pub fn drug_posts(&self) -> u64 {
        self.drug_post_ids.len() as u64
    }
}

/// Digest over the active terms, the only part of a lexicon a run reads.
fn active_digest(lexicon: &Lexicon) -> String {
    let mut h = Sha256::new();
    for t in lexicon.active_terms() {
        h.update(t.text.as_bytes());
        h.update(b"\t");
        h.update(t.category.as_str().as_bytes());
        h.update(b"\n");
    }
    for s in lexicon.selfie_tags() {
        h.update(s.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Content-derived run id: equal inputs give equal ids.
pub fn run_id(corpus_digest: &str, lexicon: &Lexicon, config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(corpus_digest.as_bytes());
    h.update(lexicon.version().to_le_bytes());
    h.update(active_digest(lexicon).as_bytes());
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(&h.finalize()[..8])
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Tracker {
    stages: Vec<StageStatus>,
    metrics: BTreeMap<String, u64>,
}

impl Tracker {
    fn done(&mut self, stage: Stage) {
        self.set(stage, StageState::Completed, None);
    }

    fn fail(&mut self, stage: Stage, err: String) {
        log::warn!("stage {stage:?} failed: {err}");
        self.set(stage, StageState::Failed, Some(err));
    }

    fn set(&mut self, stage: Stage, state: StageState, error: Option<String>) {
        let s = self.stages.iter_mut().find(|s| s.stage == stage).expect("known stage");
        s.state = state;
        s.error = error;
    }

    fn metric(&mut self, name: &str, v: impl TryInto<u64>) {
        self.metrics.insert(name.to_string(), v.try_into().unwrap_or(u64::MAX));
    }
}

/// Runs one round against a lexicon snapshot.
///
/// A failing stage stops the run; earlier outputs stay in the outcome.
pub fn execute_run(inputs: &CorpusInputs, lexicon: &Lexicon, config: &RunConfig) -> RunOutcome {
    let started_at = now_secs();
    let id = run_id(&inputs.digest, lexicon, config);
    let mut t = Tracker {
        stages: Stage::ALL
            .iter()
            .map(|s| StageStatus {
                stage: *s,
                state: StageState::Pending,
                error: None,
            })
            .collect(),
        metrics: BTreeMap::new(),
    };
    let mut outcome = RunOutcome {
        run: Run {
            run_id: id.clone(),
            corpus_digest: inputs.digest.clone(),
            lexicon_version_used: lexicon.version(),
            status: RunStatus::Failed,
            stages: Vec::new(),
            started_at,
            finished_at: started_at,
            metrics: BTreeMap::new(),
            config: config.clone(),
        },
        bundle: None,
        candidates: Vec::new(),
        itemsets: Vec::new(),
        ingest: IngestReport::default(),
        drug_post_ids: Vec::new(),
        confirmed_users: Vec::new(),
        nondrug_users: Vec::new(),
    };

    let (corpus, report) = ingest(inputs.posts_jsonl.as_slice());
    outcome.ingest = report;
    t.metric("posts_read", report.read);
    t.metric("posts_kept", report.kept);
    t.metric("duplicates_dropped", report.dup_dropped);
    t.metric("malformed", report.malformed);
    t.done(Stage::Ingest);

    let result = run_stages(&corpus, inputs, lexicon, config, &id, &mut t, &mut outcome);
    outcome.run.status = if result.is_ok() {
        RunStatus::Completed
    } else {
        RunStatus::Failed
    };
    outcome.run.stages = t.stages;
    outcome.run.metrics = t.metrics;
    outcome.run.finished_at = now_secs();
    outcome
}

fn run_stages(
    corpus: &Corpus,
    inputs: &CorpusInputs,
    lexicon: &Lexicon,
    config: &RunConfig,
    run_id: &str,
    t: &mut Tracker,
    outcome: &mut RunOutcome,
) -> Result<(), ()> {
    // classify
    if let Err(e) = config.classification.validate() {
        t.fail(Stage::Classify, e);
        return Err(());
    }
    let cls = classify_posts(corpus, lexicon, &config.classification);
    let candidates = extract_candidate_users(corpus, lexicon, &config.classification);
    let confirmed = selfie_filter(&candidates, corpus, lexicon, &config.classification);
    let nondrug = build_nondrug_cohort(corpus, lexicon, &config.classification);
    outcome.drug_post_ids = cls.drug_posts.iter().map(|p| p.media_id.clone()).collect();
    outcome.confirmed_users = confirmed.iter().map(|u| u.user_id.clone()).collect();
    outcome.nondrug_users = nondrug.iter().map(|u| u.user_id.clone()).collect();
    t.metric("drug_posts", cls.drug_posts.len());
    t.metric("unattributed_posts", cls.unattributed());
    t.metric("candidate_users", candidates.len());
    t.metric("confirmed_users", confirmed.len());
    t.metric("nondrug_users", nondrug.len());
    t.done(Stage::Classify);

    // mine
    if !(config.min_support > 0.0 && config.min_support <= 1.0) {
        t.fail(Stage::Mine, format!("min_support {} outside (0, 1]", config.min_support));
        return Err(());
    }
    let transactions: Vec<Transaction> = cls
        .drug_posts
        .iter()
        .map(|p| Transaction::new(p.media_id.clone(), p.hashtags.iter().cloned()))
        .collect();
    t.metric("transactions", transactions.len());
    if !transactions.is_empty() {
        match apriori(&transactions, config.min_support, config.max_k) {
            Ok(sets) => outcome.itemsets = sets,
            Err(e) => {
                t.fail(Stage::Mine, e.to_string());
                return Err(());
            }
        }
    }
    t.metric("frequent_itemsets", outcome.itemsets.len());
    t.done(Stage::Mine);

    // propose
    outcome.candidates = lexicon.propose_candidates(&outcome.itemsets, config.min_support);
    t.metric("candidates", outcome.candidates.len());
    t.done(Stage::Propose);

    // reports
    match build_reports(corpus, inputs, lexicon, config, run_id, &cls, outcome) {
        Ok(bundle) => {
            t.metric("clusters", bundle.geo.body.clusters.len());
            t.metric("interest_rules", bundle.interests.body.rules.len());
            outcome.bundle = Some(bundle);
            t.done(Stage::Reports);
            Ok(())
        }
        Err(e) => {
            t.fail(Stage::Reports, e.to_string());
            Err(())
        }
    }
}

fn build_reports(
    corpus: &Corpus,
    inputs: &CorpusInputs,
    lexicon: &Lexicon,
    config: &RunConfig,
    run_id: &str,
    cls: &crate::classify::Classification<'_>,
    outcome: &RunOutcome,
) -> Result<ReportBundle, PipelineError> {
    let version = lexicon.version();
    let drug_posts = &cls.drug_posts;

    let popularity = popularity_report(
        cls.class_counts(),
        drug_posts.len() as u64,
        cls.unattributed() as u64,
        config.survey_shares,
    )?;

    if !(config.peak_prominence >= 0.0) {
        return Err(PipelineError::Config("peak_prominence must be non-negative".into()));
    }
    let mut hourly = BTreeMap::new();
    let mut weekday = BTreeMap::new();
    let mut hourly_peaks = BTreeMap::new();
    let mut weekday_peaks = BTreeMap::new();
    let filters: Vec<(String, Option<DrugClass>)> = std::iter::once(("all".to_string(), None))
        .chain(DrugClass::ALL.iter().map(|c| (c.as_str().to_string(), Some(*c))))
        .collect();
    let mut all_hours = None;
    for (name, filter) in &filters {
        let h = histogram(drug_posts, TimeMode::Hour, *filter, lexicon);
        let w = histogram(drug_posts, TimeMode::Weekday, *filter, lexicon);
        hourly_peaks.insert(name.clone(), detect_peaks(&h, config.peak_prominence));
        weekday_peaks.insert(name.clone(), detect_peaks(&w, config.peak_prominence));
        if filter.is_none() {
            all_hours = Some(h.clone());
        }
        hourly.insert(name.clone(), h.bins);
        weekday.insert(name.clone(), w.bins);
    }
    let baseline_divergence = match (&config.baseline, all_hours) {
        (Some(b), Some(h)) if h.total > 0 => Some(divergence_from_baseline(&h, b).map_err(|e| PipelineError::Config(e.to_string()))?),
        _ => None,
    };
    let temporal = TemporalReport {
        drug_posts: drug_posts.len() as u64,
        hourly,
        weekday,
        hourly_peaks,
        weekday_peaks,
        baseline_divergence,
        geolocation_validation: geolocation_validation(&outcome.confirmed_users, drug_posts, config.validation_region),
    };

    let demographics = demographics_section(corpus, inputs, lexicon, config, &outcome.confirmed_users, drug_posts)?;
    let interests = interest_report(inputs, config, &outcome.confirmed_users)?;
    let network = network_section(inputs, config, corpus, &outcome.confirmed_users, &outcome.nondrug_users);
    let geo = geo_section(inputs, config, drug_posts)?;

    Ok(ReportBundle {
        popularity: stamp(run_id, version, popularity),
        temporal: stamp(run_id, version, temporal),
        demographics: stamp(run_id, version, demographics),
        interests: stamp(run_id, version, interests),
        network: stamp(run_id, version, network),
        geo: stamp(run_id, version, geo),
    })
}

fn stamp<T>(run_id: &str, lexicon_version: u32, body: T) -> Report<T> {
    Report {
        run_id: run_id.to_string(),
        lexicon_version,
        body,
    }
}

fn demographics_section(
    corpus: &Corpus,
    inputs: &CorpusInputs,
    lexicon: &Lexicon,
    config: &RunConfig,
    confirmed: &[String],
    drug_posts: &[&Post],
) -> Result<DemographicsSection, PipelineError> {
    if !(config.provider_sigma >= 0.0) {
        return Err(PipelineError::Config("provider_sigma must be non-negative".into()));
    }
    let Some(faces) = &inputs.faces else {
        return Ok(DemographicsSection {
            provider: false,
            confirmed_users: confirmed.len() as u64,
            summary: cohort_report(&[], &[], 0),
            users: Vec::new(),
        });
    };
    let provider = StubFaceProvider::new(faces.iter().cloned(), config.provider_sigma);
    let by_user = corpus.posts_by_user();
    let mut users = Vec::new();
    let mut excluded = 0;
    for uid in confirmed {
        let selfies: Vec<&Post> = by_user
            .get(uid.as_str())
            .map(|posts| {
                posts
                    .iter()
                    .copied()
                    .filter(|p| p.hashtags.iter().any(|t| lexicon.is_selfie_tag(t)))
                    .collect()
            })
            .unwrap_or_default();
        match aggregate_user(uid, &selfies, &provider) {
            Ok(d) => users.push(d),
            Err(_) => excluded += 1,
        }
    }
    Ok(DemographicsSection {
        provider: true,
        confirmed_users: confirmed.len() as u64,
        summary: cohort_report(&users, drug_posts, excluded),
        users,
    })
}

fn interest_report(inputs: &CorpusInputs, config: &RunConfig, confirmed: &[String]) -> Result<InterestReport, PipelineError> {
    let mut report = InterestReport {
        available: inputs.edges.is_some(),
        cohort_users: confirmed.len() as u64,
        min_support: config.interest_min_support,
        min_confidence: config.interest_min_confidence,
        frequent_itemsets: 0,
        rules: Vec::new(),
    };
    let Some(edges) = &inputs.edges else {
        return Ok(report);
    };
    if confirmed.is_empty() {
        return Ok(report);
    }
    let tx = followed_accounts_transactions(confirmed, edges);
    let sets = apriori(&tx, config.interest_min_support, config.interest_max_k)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    report.frequent_itemsets = sets.len() as u64;
    report.rules = rules(&sets, config.interest_min_confidence).map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(report)
}

/// Cohort labels come from this run for corpus authors and from node
/// metadata for every other account.
fn network_section(
    inputs: &CorpusInputs,
    config: &RunConfig,
    corpus: &Corpus,
    confirmed: &[String],
    nondrug: &[String],
) -> NetworkSection {
    let Some(edges) = &inputs.edges else {
        return NetworkSection {
            available: false,
            build: None,
            stats: None,
        };
    };
    let drug: BTreeSet<&str> = confirmed.iter().map(String::as_str).collect();
    let clean: BTreeSet<&str> = nondrug.iter().map(String::as_str).collect();
    let authors: BTreeSet<&str> = corpus.posts().iter().map(|p| p.user_id.as_str()).collect();
    let mut meta: BTreeMap<String, NodeMeta> = inputs.nodes.iter().map(|n| (n.id.clone(), n.clone())).collect();
    for id in drug.iter().chain(&clean) {
        meta.entry(id.to_string()).or_insert_with(|| NodeMeta {
            id: id.to_string(),
            role: crate::corpus::Role::User,
            cohort: Cohort::Unlabeled,
        });
    }
    for m in meta.values_mut() {
        if authors.contains(m.id.as_str()) {
            m.cohort = if drug.contains(m.id.as_str()) {
                Cohort::Drug
            } else if clean.contains(m.id.as_str()) {
                Cohort::Nondrug
            } else {
                Cohort::Unlabeled
            };
        }
    }
    let meta: Vec<NodeMeta> = meta.into_values().collect();
    let (graph, build) = build_graph(edges, &meta);
    NetworkSection {
        available: true,
        build: Some(build),
        stats: Some(network_report(&graph, config.network)),
    }
}

fn geo_section(inputs: &CorpusInputs, config: &RunConfig, drug_posts: &[&Post]) -> Result<GeoSection, PipelineError> {
    let points: Vec<GeoPoint> = drug_posts.iter().filter_map(|p| GeoPoint::from_post(p)).collect();
    let mut clusters = cluster_hotspots(&points, config.cluster).map_err(|e| PipelineError::Config(e.to_string()))?;
    let venues = inputs
        .venues
        .as_ref()
        .map(|rules| categorize_venues(&mut clusters, &StubGeocoder::new(rules.clone())));
    Ok(GeoSection {
        geotagged_drug_posts: points.len() as u64,
        config: config.cluster,
        clustered_posts: clusters.iter().map(|c| c.members.len() as u64).sum(),
        clusters,
        venues,
    })
}
