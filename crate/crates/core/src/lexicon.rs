//! Versioned dictionary of drug-related hashtags and its curation lifecycle.
//!
//! A [`Lexicon`] is an immutable value. Curation produces a new value through
//! [`Lexicon::with_proposals`] (adds pending candidates, no version bump) and
//! [`Lexicon::apply_decisions`] (one batch, one version bump). Every change is
//! appended to the lexicon's event history, and [`Lexicon::replay`] rebuilds
//! any version from the seed plus that history.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hashtag::{normalize_hashtag, HashtagError};
use crate::itemsets::ItemSet;

/// Seed dictionary shipped with the crate.
pub const SHIPPED_SEED: &str = include_str!("../data/seed_terms.txt");
/// Curator category overlay for the shipped seed.
pub const SHIPPED_CATEGORIES: &str = include_str!("../data/categories.tsv");
pub const DEFAULT_SELFIE_TAGS: [&str; 4] = ["selfie", "weedselfie", "selfportrait", "selfy"];
/// Default support threshold for proposing mined hashtags as candidates.
pub const DEFAULT_PROPOSAL_SUPPORT: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Weed,
    Syrup,
    Pills,
    General,
}

impl Category {
    pub fn drug_class(self) -> Option<DrugClass> {
        match self {
            Category::Weed => Some(DrugClass::Weed),
            Category::Syrup => Some(DrugClass::Syrup),
            Category::Pills => Some(DrugClass::Pills),
            Category::General => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Weed => "weed",
            Category::Syrup => "syrup",
            Category::Pills => "pills",
            Category::General => "general",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weed" => Ok(Category::Weed),
            "syrup" => Ok(Category::Syrup),
            "pills" => Ok(Category::Pills),
            "general" => Ok(Category::General),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

/// The three drug classes a post can be attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrugClass {
    Weed,
    Syrup,
    Pills,
}

impl DrugClass {
    pub const ALL: [DrugClass; 3] = [DrugClass::Weed, DrugClass::Syrup, DrugClass::Pills];

    pub fn as_str(self) -> &'static str {
        Category::from(self).as_str()
    }
}

impl From<DrugClass> for Category {
    fn from(class: DrugClass) -> Self {
        match class {
            DrugClass::Weed => Category::Weed,
            DrugClass::Syrup => Category::Syrup,
            DrugClass::Pills => Category::Pills,
        }
    }
}

impl fmt::Display for DrugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DrugClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::from_str(s)?
            .drug_class()
            .ok_or_else(|| format!("{s:?} is not a drug class"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermStatus {
    Seed,
    Pending,
    Accepted,
    Rejected,
    Banned,
}

impl TermStatus {
    /// Only seed and accepted terms take part in matching.
    pub fn is_active(self) -> bool {
        matches!(self, TermStatus::Seed | TermStatus::Accepted)
    }
}

impl FromStr for TermStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seed" => Ok(TermStatus::Seed),
            "pending" => Ok(TermStatus::Pending),
            "accepted" => Ok(TermStatus::Accepted),
            "rejected" => Ok(TermStatus::Rejected),
            "banned" => Ok(TermStatus::Banned),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub text: String,
    pub category: Category,
    pub status: TermStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_at_proposal: Option<f64>,
    pub version_added: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Ban,
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            "ban" => Ok(Verdict::Ban),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationDecision {
    pub term_text: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    /// Unix seconds.
    pub decided_at: u64,
    pub actor: String,
}

impl CurationDecision {
    pub fn accept(term: &str, category: Category, decided_at: u64, actor: &str) -> Self {
        Self::new(term, Verdict::Accept, Some(category), decided_at, actor)
    }

    pub fn reject(term: &str, decided_at: u64, actor: &str) -> Self {
        Self::new(term, Verdict::Reject, None, decided_at, actor)
    }

    pub fn ban(term: &str, decided_at: u64, actor: &str) -> Self {
        Self::new(term, Verdict::Ban, None, decided_at, actor)
    }

    pub fn new(
        term: &str,
        verdict: Verdict,
        category: Option<Category>,
        decided_at: u64,
        actor: &str,
    ) -> Self {
        Self {
            term_text: term.to_string(),
            verdict,
            category,
            decided_at,
            actor: actor.to_string(),
        }
    }

    fn check_shape(&self) -> Result<(), LexiconError> {
        match (self.verdict, self.category) {
            (Verdict::Accept, None) => Err(LexiconError::InvalidDecision {
                term: self.term_text.clone(),
                reason: "accept requires a category".into(),
            }),
            (Verdict::Reject | Verdict::Ban, Some(_)) => Err(LexiconError::InvalidDecision {
                term: self.term_text.clone(),
                reason: "reject and ban take no category".into(),
            }),
            _ => Ok(()),
        }
    }
}

/// One line of the append-only lexicon history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LexiconEvent {
    Proposed(ProposalRecord),
    Decided(DecisionRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub term: String,
    pub support: f64,
    /// Lexicon version the proposal was made against.
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub term: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub timestamp: u64,
    pub actor: String,
    /// Version produced by the batch this decision belongs to.
    pub version: u32,
}

impl DecisionRecord {
    pub fn decision(&self) -> CurationDecision {
        CurationDecision::new(&self.term, self.verdict, self.category, self.timestamp, &self.actor)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("seed source contains no terms")]
    EmptySource,
    #[error("unknown term {0:?}")]
    UnknownTerm(String),
    #[error("term {term:?} is {status:?}, not pending")]
    NotPending { term: String, status: TermStatus },
    #[error("invalid decision for {term:?}: {reason}")]
    InvalidDecision { term: String, reason: String },
    #[error("category overlay can only be applied to an uncurated seed lexicon")]
    OverlayAfterCuration,
    #[error("history replay failed: {0}")]
    Replay(String),
    #[error("unknown version {0}")]
    UnknownVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lexicon {
    version: u32,
    terms: BTreeMap<String, Term>,
    selfie_tags: BTreeSet<String>,
    #[serde(skip)]
    base: Arc<BTreeMap<String, Term>>,
    history: Vec<LexiconEvent>,
}

impl Lexicon {
    /// Parses a seed dictionary: one term per line, `#` starts a comment line.
    ///
    /// Case variants and repeated entries collapse to a single seed term.
    pub fn load_seed(source: &str) -> Result<Self, LexiconError> {
        let mut terms = BTreeMap::new();
        for (idx, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let text = normalize_hashtag(line).map_err(|e| LexiconError::Parse {
                line: idx + 1,
                message: describe(&e),
            })?;
            terms.entry(text.clone()).or_insert(Term {
                text,
                category: Category::General,
                status: TermStatus::Seed,
                support_at_proposal: None,
                version_added: 1,
            });
        }
        if terms.is_empty() {
            return Err(LexiconError::EmptySource);
        }
        Ok(Self::from_base(terms))
    }

    /// The shipped seed with the shipped category overlay applied.
    pub fn shipped() -> Self {
        Self::load_seed(SHIPPED_SEED)
            .and_then(|lex| lex.with_overlay(SHIPPED_CATEGORIES))
            .expect("shipped seed data is valid")
    }

    fn from_base(terms: BTreeMap<String, Term>) -> Self {
        Self {
            version: 1,
            base: Arc::new(terms.clone()),
            terms,
            selfie_tags: DEFAULT_SELFIE_TAGS.iter().map(|s| s.to_string()).collect(),
            history: Vec::new(),
        }
    }

    /// Assigns categories to seed terms from `term<TAB>category` lines.
    pub fn with_overlay(&self, overlay: &str) -> Result<Self, LexiconError> {
        if self.version != 1 || !self.history.is_empty() {
            return Err(LexiconError::OverlayAfterCuration);
        }
        let mut terms = (*self.base).clone();
        for (idx, raw) in overlay.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| LexiconError::Parse { line: idx + 1, message };
            let (term, category) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected term<TAB>category".into()))?;
            let text = normalize_hashtag(term.trim()).map_err(|e| parse_err(describe(&e)))?;
            let category = Category::from_str(category).map_err(parse_err)?;
            match terms.get_mut(&text) {
                Some(t) => t.category = category,
                None => return Err(parse_err(format!("{text:?} is not a seed term"))),
            }
        }
        let mut lex = Self::from_base(terms);
        lex.selfie_tags = self.selfie_tags.clone();
        Ok(lex)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&Term> {
        self.terms.get(text)
    }

    pub fn contains(&self, text: &str) -> bool {
        self.terms.contains_key(text)
    }

    /// All terms, ordered by text.
    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.values()
    }

    pub fn terms_with_status(&self, status: TermStatus) -> impl Iterator<Item = &Term> {
        self.terms.values().filter(move |t| t.status == status)
    }

    pub fn active_terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.values().filter(|t| t.status.is_active())
    }

    pub fn is_active(&self, text: &str) -> bool {
        self.terms.get(text).is_some_and(|t| t.status.is_active())
    }

    pub fn selfie_tags(&self) -> &BTreeSet<String> {
        &self.selfie_tags
    }

    pub fn is_selfie_tag(&self, tag: &str) -> bool {
        self.selfie_tags.contains(tag)
    }

    pub fn history(&self) -> &[LexiconEvent] {
        &self.history
    }

    /// Active terms equal to one of `hashtags`, deduplicated and ordered by text.
    ///
    /// Inputs are normalized first, so `"KUSH"` and `"#kush"` both match `kush`.
    pub fn match_terms<S: AsRef<str>>(&self, hashtags: &[S]) -> Vec<&Term> {
        let mut seen = BTreeMap::new();
        for raw in hashtags {
            let raw = raw.as_ref();
            let owned;
            let key = if is_normal(raw) {
                raw
            } else {
                match normalize_hashtag(raw) {
                    Ok(t) => {
                        owned = t;
                        owned.as_str()
                    }
                    Err(_) => continue,
                }
            };
            if let Some((k, term)) = self.terms.get_key_value(key) {
                if term.status.is_active() {
                    seen.insert(k.as_str(), term);
                }
            }
        }
        seen.into_values().collect()
    }

    /// Mined hashtags not yet housed in the lexicon, as pending terms.
    ///
    /// A hashtag qualifies when it appears in an itemset meeting `min_support`;
    /// its recorded support is the highest among those itemsets. Output is
    /// ordered by support descending, then text.
    pub fn propose_candidates(&self, itemsets: &[ItemSet], min_support: f64) -> Vec<Term> {
        let mut best: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for set in itemsets.iter().filter(|s| s.meets(min_support)) {
            for item in &set.items {
                if self.terms.contains_key(item.as_str()) {
                    continue;
                }
                let entry = best.entry(item.as_str()).or_insert((set.count, set.total));
                // compare count/total exactly
                if (set.count as u128) * (entry.1 as u128) > (entry.0 as u128) * (set.total as u128) {
                    *entry = (set.count, set.total);
                }
            }
        }
        let mut out: Vec<(u64, u64, Term)> = best
            .into_iter()
            .filter(|(text, _)| normalize_hashtag(text).as_deref() == Ok(*text))
            .map(|(text, (count, total))| {
                let term = Term {
                    text: text.to_string(),
                    category: Category::General,
                    status: TermStatus::Pending,
                    support_at_proposal: Some(count as f64 / total as f64),
                    version_added: self.version,
                };
                (count, total, term)
            })
            .collect();
        out.sort_by(|a, b| {
            let lhs = (b.0 as u128) * (a.1 as u128);
            let rhs = (a.0 as u128) * (b.1 as u128);
            lhs.cmp(&rhs).then_with(|| a.2.text.cmp(&b.2.text))
        });
        out.into_iter().map(|(_, _, t)| t).collect()
    }

    /// Adds pending terms to the lexicon and records the proposals.
    ///
    /// Terms already present (any status) are skipped. The version is unchanged.
    pub fn with_proposals(&self, proposals: &[Term], run_id: Option<&str>) -> Self {
        let mut next = self.clone();
        for term in proposals {
            if next.terms.contains_key(&term.text) {
                continue;
            }
            let support = term.support_at_proposal.unwrap_or(0.0);
            next.insert_pending(&term.text, support);
            next.history.push(LexiconEvent::Proposed(ProposalRecord {
                term: term.text.clone(),
                support,
                version: next.version,
                run_id: run_id.map(str::to_string),
            }));
        }
        next
    }

    fn insert_pending(&mut self, text: &str, support: f64) {
        self.terms.insert(
            text.to_string(),
            Term {
                text: text.to_string(),
                category: Category::General,
                status: TermStatus::Pending,
                support_at_proposal: Some(support),
                version_added: self.version,
            },
        );
    }

    /// Applies one batch of curation decisions atomically.
    ///
    /// An empty batch returns the lexicon unchanged; otherwise the version
    /// goes up by one. Any invalid decision rejects the whole batch.
    pub fn apply_decisions(&self, decisions: &[CurationDecision]) -> Result<Self, LexiconError> {
        if decisions.is_empty() {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        next.version += 1;
        for decision in decisions {
            decision.check_shape()?;
            let term = next
                .terms
                .get_mut(&decision.term_text)
                .ok_or_else(|| LexiconError::UnknownTerm(decision.term_text.clone()))?;
            if term.status != TermStatus::Pending {
                return Err(LexiconError::NotPending {
                    term: term.text.clone(),
                    status: term.status,
                });
            }
            match decision.verdict {
                Verdict::Accept => {
                    term.status = TermStatus::Accepted;
                    term.category = decision.category.expect("checked above");
                    term.version_added = next.version;
                }
                Verdict::Reject => term.status = TermStatus::Rejected,
                Verdict::Ban => term.status = TermStatus::Banned,
            }
            next.history.push(LexiconEvent::Decided(DecisionRecord {
                term: decision.term_text.clone(),
                verdict: decision.verdict,
                category: decision.category,
                timestamp: decision.decided_at,
                actor: decision.actor.clone(),
                version: next.version,
            }));
        }
        Ok(next)
    }

    /// The version-1 lexicon this one descends from (seed plus overlay).
    pub fn base(&self) -> Self {
        let mut lex = Self::from_base((*self.base).clone());
        lex.selfie_tags = self.selfie_tags.clone();
        lex
    }

    /// Rebuilds a lexicon by replaying `events` on top of `base`.
    pub fn replay(base: &Lexicon, events: &[LexiconEvent]) -> Result<Self, LexiconError> {
        let mut lex = base.base();
        let mut i = 0;
        while i < events.len() {
            match &events[i] {
                LexiconEvent::Proposed(p) => {
                    if p.version != lex.version {
                        return Err(LexiconError::Replay(format!(
                            "proposal of {:?} recorded at version {} but lexicon is at {}",
                            p.term, p.version, lex.version
                        )));
                    }
                    if lex.terms.contains_key(&p.term) {
                        return Err(LexiconError::Replay(format!(
                            "proposal of already housed term {:?}",
                            p.term
                        )));
                    }
                    lex.insert_pending(&p.term, p.support);
                    lex.history.push(events[i].clone());
                    i += 1;
                }
                LexiconEvent::Decided(first) => {
                    let mut batch = Vec::new();
                    while let Some(LexiconEvent::Decided(d)) = events.get(i) {
                        if d.version != first.version {
                            break;
                        }
                        batch.push(d.decision());
                        i += 1;
                    }
                    if first.version != lex.version + 1 {
                        return Err(LexiconError::Replay(format!(
                            "decision batch for version {} follows version {}",
                            first.version, lex.version
                        )));
                    }
                    lex = lex
                        .apply_decisions(&batch)
                        .map_err(|e| LexiconError::Replay(e.to_string()))?;
                }
            }
        }
        Ok(lex)
    }

    /// Reconstructs the lexicon as it stood at `version`, including any
    /// proposals made against that version.
    pub fn at_version(&self, version: u32) -> Result<Self, LexiconError> {
        if version == 0 || version > self.version {
            return Err(LexiconError::UnknownVersion(version));
        }
        let cut = self
            .history
            .iter()
            .position(|e| matches!(e, LexiconEvent::Decided(d) if d.version > version))
            .unwrap_or(self.history.len());
        Self::replay(self, &self.history[..cut])
    }

    /// Content digest over version, terms and selfie tags.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.version.to_le_bytes());
        for term in self.terms.values() {
            hasher.update(serde_json::to_vec(term).expect("term serializes"));
            hasher.update(b"\n");
        }
        for tag in &self.selfie_tags {
            hasher.update(tag.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

fn is_normal(tag: &str) -> bool {
    tag.bytes()
        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'.')
        && !tag.is_empty()
}

fn describe(err: &HashtagError) -> String {
    err.to_string()
}
