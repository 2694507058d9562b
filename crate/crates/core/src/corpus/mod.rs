//! Post and user data model, JSON Lines ingestion and deduplication.

mod fetch;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use crate::hashtag::{normalize_hashtag, HashtagError};
pub use fetch::{
    fetch_all, Clock, FetchConfig, FetchError, FetchStats, FetchStream, RequestBudget, SimulatedClock,
    SourceAdapter, SourceError, SourcePage, SystemClock,
};
pub use synth::{
    generate_synthetic, ClassHours, ClassWeights, DemographicSpec, GeneratorOutput, GeneratorSpec, GeoSpec,
    Hotspot, NetworkSpec, PlantedPage, PlantedSlang, SpecError, TruthRecord, AgeBand,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geo {
    pub lat: f64,
    pub lon: f64,
}

impl Geo {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub media_id: String,
    pub user_id: String,
    pub username: String,
    /// Unix seconds, GMT.
    pub created_at: i64,
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<Geo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
}

impl Post {
    /// Normalizes hashtags in place (dropping repeats) and checks invariants.
    pub fn normalized(mut self) -> Result<Self, String> {
        if self.media_id.is_empty() {
            return Err("empty media_id".into());
        }
        if self.created_at <= 0 {
            return Err(format!("created_at {} is not positive", self.created_at));
        }
        if let Some(g) = self.geo {
            if !g.is_valid() {
                return Err(format!("geo ({}, {}) out of range", g.lat, g.lon));
            }
        }
        let mut seen = HashSet::new();
        let mut tags = Vec::with_capacity(self.hashtags.len());
        for raw in &self.hashtags {
            let tag = normalize_hashtag(raw).map_err(|e| e.to_string())?;
            if seen.insert(tag.clone()) {
                tags.push(tag);
            }
        }
        self.hashtags = tags;
        Ok(self)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.hashtags.iter().any(|t| t == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    #[default]
    Unlabeled,
    Drug,
    Nondrug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Unknown,
    User,
    Dealer,
    Page,
}

impl Role {
    /// Label used when rendering account lists, e.g. `name(dealer)`.
    pub fn label(self) -> Option<&'static str> {
        match self {
            Role::Unknown => None,
            Role::User => Some("user"),
            Role::Dealer => Some("dealer"),
            Role::Page => Some("public page"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub username: String,
    pub posts: Vec<String>,
    pub cohort: Cohort,
    pub role: Role,
}

/// Counts reported at the end of an ingestion pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: u64,
    pub kept: u64,
    pub dup_dropped: u64,
    pub malformed: u64,
}

/// Deduplicated, immutable collection of posts in ingestion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus keeping the first post for each media id.
    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> (Self, u64) {
        let mut corpus = Corpus::default();
        let mut dropped = 0;
        for p in posts {
            if !corpus.push(p) {
                dropped += 1;
            }
        }
        (corpus, dropped)
    }

    fn push(&mut self, post: Post) -> bool {
        if self.index.contains_key(&post.media_id) {
            return false;
        }
        self.index.insert(post.media_id.clone(), self.posts.len());
        self.posts.push(post);
        true
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn get(&self, media_id: &str) -> Option<&Post> {
        self.index.get(media_id).map(|&i| &self.posts[i])
    }

    /// Posts grouped by user id, users ordered by id, posts in corpus order.
    pub fn posts_by_user(&self) -> BTreeMap<&str, Vec<&Post>> {
        let mut out: BTreeMap<&str, Vec<&Post>> = BTreeMap::new();
        for p in &self.posts {
            out.entry(p.user_id.as_str()).or_default().push(p);
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.posts {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Streams JSON Lines post documents into a corpus.
///
/// Malformed lines (bad JSON, bad UTF-8, invariant violations) are counted
/// and skipped; blank lines are ignored; repeated media ids keep the first.
pub fn ingest<R: BufRead>(reader: R) -> (Corpus, IngestReport) {
    let mut corpus = Corpus::default();
    let mut report = IngestReport::default();
    for (idx, chunk) in reader.split(b'\n').enumerate() {
        let bytes = match chunk {
            Ok(b) => b,
            Err(e) => {
                log::warn!("read error after line {idx}: {e}");
                report.malformed += 1;
                break;
            }
        };
        let Ok(line) = std::str::from_utf8(&bytes) else {
            report.read += 1;
            report.malformed += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        report.read += 1;
        let post = serde_json::from_str::<Post>(line)
            .map_err(|e| e.to_string())
            .and_then(Post::normalized);
        match post {
            Ok(p) => {
                if corpus.push(p) {
                    report.kept += 1;
                } else {
                    report.dup_dropped += 1;
                }
            }
            Err(e) => {
                log::debug!("line {}: malformed post: {e}", idx + 1);
                report.malformed += 1;
            }
        }
    }
    (corpus, report)
}

pub fn write_users_jsonl<W: Write>(mut w: W, users: &[UserRecord]) -> std::io::Result<()> {
    for u in users {
        serde_json::to_writer(&mut w, u)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str) -> String {
        format!(
            r##"{{"media_id":"{id}","user_id":"u1","username":"alice","created_at":1458220768,"hashtags":["#Kush","420"],"caption":"hi"}}"##
        )
    }

    #[test]
    fn dedup_keeps_first() {
        let input = format!("{}\n{}\n{}\n", doc("a"), doc("b"), doc("a"));
        let (c, r) = ingest(input.as_bytes());
        assert_eq!(c.len(), 2);
        assert_eq!(r, IngestReport { read: 3, kept: 2, dup_dropped: 1, malformed: 0 });
        assert_eq!(c.posts()[0].hashtags, vec!["kush", "420"]);
    }

    #[test]
    fn empty_stream() {
        let (c, r) = ingest("".as_bytes());
        assert!(c.is_empty());
        assert_eq!(r, IngestReport::default());
    }

    #[test]
    fn malformed_lines_are_skipped() {
        let bad_geo = r#"{"media_id":"g","user_id":"u","username":"x","created_at":5,"hashtags":[],"geo":{"lat":91.0,"lon":0.0}}"#;
        let bad_tag = r#"{"media_id":"t","user_id":"u","username":"x","created_at":5,"hashtags":["weed porn"]}"#;
        let bad_time = r#"{"media_id":"z","user_id":"u","username":"x","created_at":0,"hashtags":[]}"#;
        let mut input = format!("{}\nnot json\n{bad_geo}\n{bad_tag}\n{bad_time}\n\n", doc("a")).into_bytes();
        input.extend_from_slice(b"\xff\xfe\n");
        input.extend_from_slice(doc("b").as_bytes());
        let (c, r) = ingest(input.as_slice());
        assert_eq!(c.len(), 2);
        assert_eq!(r.read, 7);
        assert_eq!(r.malformed, 5);
    }

    #[test]
    fn ingest_is_idempotent() {
        let input = format!("{}\n{}\n{}\n", doc("a"), doc("b"), doc("a"));
        let (c, _) = ingest(input.as_bytes());
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let (again, r) = ingest(buf.as_slice());
        assert_eq!(again, c);
        assert_eq!(r.dup_dropped, 0);
        let mut buf2 = Vec::new();
        again.write_jsonl(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn geo_is_nested_or_absent() {
        let p = Post {
            media_id: "m".into(),
            user_id: "u".into(),
            username: "n".into(),
            created_at: 1,
            hashtags: vec![],
            caption: String::new(),
            geo: Some(Geo::new(33.7, -118.2)),
            media_ref: None,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains(r#""geo":{"lat":33.7,"lon":-118.2}"#));
        assert!(!s.contains("media_ref"));
        let mut q = p.clone();
        q.geo = None;
        assert!(!serde_json::to_string(&q).unwrap().contains("geo"));
    }

    #[test]
    fn repeated_tags_in_one_post_collapse() {
        let raw = r##"{"media_id":"a","user_id":"u","username":"x","created_at":5,"hashtags":["kush","#KUSH","weed"]}"##;
        let (c, _) = ingest(raw.as_bytes());
        assert_eq!(c.posts()[0].hashtags, vec!["kush", "weed"]);
    }
}
