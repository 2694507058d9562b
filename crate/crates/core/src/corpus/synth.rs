//! Seeded synthetic corpora with planted patterns and ground truth.
//!
//! A [`GeneratorSpec`] describes the populations (drug users, decoy users
//! with a single drug tag, probe-tag users), the class mixture and hour
//! profile of drug posts, and optional geo, face and follow-graph layers.
//! The same spec and seed always produce the same output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Cohort, Geo, Post, Role};
use crate::demographics::{FaceFixtureLine, FaceRect, FixtureFace, Gender};
use crate::geospatial::{BoundingBox, GeocoderRule, VenueCategory};
use crate::lexicon::{DrugClass, Lexicon, TermStatus};
use crate::network::{write_edges_csv, NodeMeta};

const DAY: i64 = 86_400;
const WEEK: i64 = 7 * DAY;
/// Day 4 of the epoch (1970-01-05) is a Monday.
const FIRST_MONDAY: i64 = 4 * DAY;
const M_PER_DEG_LAT: f64 = crate::geospatial::EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid generator spec: {0}")]
pub struct SpecError(pub String);

fn bad(msg: impl Into<String>) -> SpecError {
    SpecError(msg.into())
}

/// Relative weights of the three drug classes; normalized before sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weed: f64,
    pub syrup: f64,
    pub pills: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            weed: 0.72,
            syrup: 0.14,
            pills: 0.13,
        }
    }
}

impl ClassWeights {
    pub fn get(&self, class: DrugClass) -> f64 {
        match class {
            DrugClass::Weed => self.weed,
            DrugClass::Syrup => self.syrup,
            DrugClass::Pills => self.pills,
        }
    }

    /// Weights scaled to sum to one, in [`DrugClass::ALL`] order.
    pub fn normalized(&self) -> [f64; 3] {
        let sum = self.weed + self.syrup + self.pills;
        DrugClass::ALL.map(|c| self.get(c) / sum)
    }
}

/// Optional per-class hour profiles overriding the shared one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassHours {
    pub weed: Option<Vec<f64>>,
    pub syrup: Option<Vec<f64>>,
    pub pills: Option<Vec<f64>>,
}

impl ClassHours {
    fn get(&self, class: DrugClass) -> Option<&Vec<f64>> {
        match class {
            DrugClass::Weed => self.weed.as_ref(),
            DrugClass::Syrup => self.syrup.as_ref(),
            DrugClass::Pills => self.pills.as_ref(),
        }
    }
}

/// An unknown tag that co-occurs with a known anchor term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSlang {
    pub tag: String,
    pub anchor: String,
    /// Share of drug posts carrying the tag.
    pub rate: f64,
    /// Posts by drug users holding only the anchor and the slang; they turn
    /// drug-positive once the slang is accepted.
    pub near_miss_posts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub lat: f64,
    pub lon: f64,
    pub sigma_m: f64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<VenueCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoSpec {
    /// Share of drug posts carrying coordinates.
    pub geotag_fraction: f64,
    pub region: BoundingBox,
    pub hotspots: Vec<Hotspot>,
    /// Weight of uniform placement inside the region, against the hotspot weights.
    pub noise_weight: f64,
    /// Share of drug users whose geotagged posts all fall outside the region.
    pub outside_user_fraction: f64,
}

impl Default for GeoSpec {
    fn default() -> Self {
        let c = Geo::new(34.05, -118.25);
        let at = |dlat: f64, dlon: f64, venue| Hotspot {
            lat: c.lat + dlat,
            lon: c.lon + dlon,
            sigma_m: 50.0,
            weight: 1.0,
            venue: Some(venue),
        };
        Self {
            geotag_fraction: 0.3,
            region: BoundingBox::new(33.85, -118.5, 34.25, -118.0),
            hotspots: vec![
                at(0.05, -0.08, VenueCategory::Residential),
                at(-0.06, 0.02, VenueCategory::Club),
                at(0.01, 0.1, VenueCategory::Restaurant),
            ],
            noise_weight: 1.0,
            outside_user_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBand {
    pub min: f64,
    pub max: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemographicSpec {
    /// Share of selfie-passing users that are female, applied as an exact count.
    pub female_fraction: f64,
    pub age_bands: Vec<AgeBand>,
    /// Per-face deviation of the age estimate around the true age.
    pub face_sigma: f64,
    /// Share of selfie posts without a detectable face.
    pub faceless_fraction: f64,
    /// Chance a selfie also shows a smaller second face.
    pub extra_face_rate: f64,
}

impl Default for DemographicSpec {
    fn default() -> Self {
        let band = |min, max, weight| AgeBand { min, max, weight };
        Self {
            female_fraction: 145.0 / 406.0,
            age_bands: vec![
                band(13.0, 15.0, 0.05),
                band(15.0, 20.0, 0.25),
                band(20.0, 30.0, 0.45),
                band(30.0, 40.0, 0.17),
                band(40.0, 55.0, 0.08),
            ],
            face_sigma: 5.0,
            faceless_fraction: 0.1,
            extra_face_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPage {
    pub id: String,
    #[serde(default = "default_page_role")]
    pub role: Role,
    /// Exact share of drug users following the page.
    pub drug_rate: f64,
    /// Exact share of probe-tag users following the page.
    pub nondrug_rate: f64,
}

fn default_page_role() -> Role {
    Role::Page
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub pool_size: usize,
    pub follows_per_user: usize,
    /// Chance a follow between two cohort accounts is returned.
    pub mutual_rate: f64,
    pub pages: Vec<PlantedPage>,
    pub dealers: usize,
    pub dealer_follow_rate: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let page = |id: &str, drug_rate, nondrug_rate| PlantedPage {
            id: id.into(),
            role: Role::Page,
            drug_rate,
            nondrug_rate,
        };
        Self {
            pool_size: 2000,
            follows_per_user: 30,
            mutual_rate: 0.3,
            pages: vec![
                page("sdryno", 0.25, 0.01),
                page("coylecondenser", 0.25, 0.01),
                page("oilbrothers", 0.15, 0.02),
                page("elkthatrun", 0.15, 0.02),
                page("dailysunsets", 0.1, 0.3),
            ],
            dealers: 10,
            dealer_follow_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub drug_users: usize,
    pub drug_posts_per_user: usize,
    pub filler_posts_per_user: usize,
    pub decoy_users: usize,
    pub decoy_posts_per_user: usize,
    /// Share of decoy users who also use the probe tag.
    pub decoy_probe_fraction: f64,
    pub nondrug_users: usize,
    pub nondrug_posts_per_user: usize,
    pub class_weights: ClassWeights,
    /// Shared hour-of-day profile of drug posts (24 weights).
    pub hour_weights: Vec<f64>,
    pub class_hours: ClassHours,
    /// Day-of-week profile, Monday first (7 weights).
    pub weekday_weights: Vec<f64>,
    /// Inclusive range of class terms per drug post.
    pub drug_tags_per_post: (usize, usize),
    /// Chance a drug post also carries one general drug term.
    pub general_tag_rate: f64,
    pub decoy_tags_per_post: (usize, usize),
    pub decoy_vocabulary: Vec<String>,
    /// Share of drug users given enough selfie posts to pass the selfie filter.
    pub selfie_user_fraction: f64,
    pub selfie_posts_per_user: (usize, usize),
    pub probe_tag: String,
    pub planted_slang: Option<PlantedSlang>,
    /// Share of posts emitted twice.
    pub duplicate_fraction: f64,
    pub time_start: i64,
    pub time_end: i64,
    pub geo: Option<GeoSpec>,
    pub demographics: Option<DemographicSpec>,
    pub network: Option<NetworkSpec>,
}

fn default_decoys() -> Vec<String> {
    [
        "sunset", "beach", "food", "love", "fitness", "travel", "nofilter", "friends", "music", "art", "dog",
        "cat", "coffee", "summer", "family", "style", "photooftheday", "nature", "happy", "gym", "throwback",
        "tbt", "cute", "fashion", "instagood", "smile", "sky", "city", "night", "weekend", "pizza", "cars",
        "sneakers", "shoes", "hair", "makeup", "books", "movies", "football", "basketball",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let mut hours = vec![1.0; 24];
        hours[16] = 6.0;
        hours[21] = 5.0;
        Self {
            drug_users: 500,
            drug_posts_per_user: 20,
            filler_posts_per_user: 4,
            decoy_users: 100,
            decoy_posts_per_user: 5,
            decoy_probe_fraction: 0.3,
            nondrug_users: 200,
            nondrug_posts_per_user: 5,
            class_weights: ClassWeights::default(),
            hour_weights: hours,
            class_hours: ClassHours::default(),
            weekday_weights: vec![1.0; 7],
            drug_tags_per_post: (2, 4),
            general_tag_rate: 0.3,
            decoy_tags_per_post: (1, 3),
            decoy_vocabulary: default_decoys(),
            selfie_user_fraction: 0.35,
            selfie_posts_per_user: (2, 4),
            probe_tag: "instapic".into(),
            planted_slang: Some(PlantedSlang {
                tag: "newslang".into(),
                anchor: "kush".into(),
                rate: 0.25,
                near_miss_posts: 200,
            }),
            duplicate_fraction: 0.02,
            time_start: 1_420_070_400,
            time_end: 1_451_606_400,
            geo: Some(GeoSpec::default()),
            demographics: Some(DemographicSpec::default()),
            network: Some(NetworkSpec::default()),
        }
    }
}

/// Ground truth for one generated post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub media_id: String,
    pub user_id: String,
    /// Drug-positive under the shipped lexicon with two matching terms.
    pub is_drug: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<DrugClass>,
    pub cohort: Cohort,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub slang: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub near_miss: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOutput {
    pub spec: GeneratorSpec,
    pub seed: u64,
    /// Posts in time order, planted duplicates right after their originals.
    pub posts: Vec<Post>,
    /// One record per distinct post, in post order.
    pub truth: Vec<TruthRecord>,
    pub faces: Vec<FaceFixtureLine>,
    pub edges: Vec<(String, String)>,
    pub nodes: Vec<NodeMeta>,
    pub geocoder_rules: Vec<GeocoderRule>,
    /// Drug users planted to pass the selfie filter, sorted.
    pub selfie_users: Vec<String>,
}

impl GeneratorOutput {
    /// Writes `posts.jsonl`, `truth.jsonl`, `spec.json` and, when present,
    /// `faces.jsonl`, `follows.csv`, `nodes.jsonl` and `venues.jsonl`.
    pub fn write_bundle(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("posts.jsonl"), &self.posts)?;
        write_jsonl(&dir.join("truth.jsonl"), &self.truth)?;
        let spec = serde_json::json!({"seed": self.seed, "spec": self.spec});
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
        if self.spec.demographics.is_some() {
            write_jsonl(&dir.join("faces.jsonl"), &self.faces)?;
        }
        if self.spec.network.is_some() {
            let f = BufWriter::new(fs::File::create(dir.join("follows.csv"))?);
            write_edges_csv(f, &self.edges)?;
            write_jsonl(&dir.join("nodes.jsonl"), &self.nodes)?;
        }
        if self.spec.geo.is_some() {
            write_jsonl(&dir.join("venues.jsonl"), &self.geocoder_rules)?;
        }
        Ok(())
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn check_weights(name: &str, w: &[f64], len: usize) -> Result<(), SpecError> {
    if w.len() != len {
        return Err(bad(format!("{name} needs {len} weights, got {}", w.len())));
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
        return Err(bad(format!("{name} weights must be non-negative with a positive sum")));
    }
    Ok(())
}

fn check_fraction(name: &str, x: f64) -> Result<(), SpecError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(bad(format!("{name} = {x} is not in [0, 1]")))
    }
}

fn check_range(name: &str, r: (usize, usize)) -> Result<(), SpecError> {
    if r.0 > r.1 {
        return Err(bad(format!("{name} range ({}, {}) is inverted", r.0, r.1)));
    }
    Ok(())
}

impl GeneratorSpec {
    pub fn validate(&self, lexicon: &Lexicon) -> Result<(), SpecError> {
        let cw = [self.class_weights.weed, self.class_weights.syrup, self.class_weights.pills];
        check_weights("class_weights", &cw, 3)?;
        check_weights("hour_weights", &self.hour_weights, 24)?;
        for c in DrugClass::ALL {
            if let Some(h) = self.class_hours.get(c) {
                check_weights(&format!("class_hours.{c}"), h, 24)?;
            }
        }
        check_weights("weekday_weights", &self.weekday_weights, 7)?;
        check_range("drug_tags_per_post", self.drug_tags_per_post)?;
        check_range("decoy_tags_per_post", self.decoy_tags_per_post)?;
        check_range("selfie_posts_per_user", self.selfie_posts_per_user)?;
        if self.drug_tags_per_post.0 < 2 {
            return Err(bad("drug posts need at least two class terms"));
        }
        if self.selfie_posts_per_user.0 < 2 {
            return Err(bad("selfie-passing users need at least two selfie posts"));
        }
        for c in DrugClass::ALL {
            let n = class_vocab(lexicon, c).len();
            if n < self.drug_tags_per_post.1 {
                return Err(bad(format!("class {c} has {n} terms, fewer than drug_tags_per_post")));
            }
        }
        for (name, x) in [
            ("decoy_probe_fraction", self.decoy_probe_fraction),
            ("general_tag_rate", self.general_tag_rate),
            ("selfie_user_fraction", self.selfie_user_fraction),
            ("duplicate_fraction", self.duplicate_fraction),
        ] {
            check_fraction(name, x)?;
        }
        if self.decoy_vocabulary.len() < self.decoy_tags_per_post.1 {
            return Err(bad("decoy vocabulary is smaller than decoy_tags_per_post"));
        }
        for tag in self.decoy_vocabulary.iter().chain([&self.probe_tag]) {
            if lexicon.contains(tag) || lexicon.is_selfie_tag(tag) {
                return Err(bad(format!("tag {tag:?} collides with the lexicon or selfie markers")));
            }
        }
        if self.decoy_vocabulary.contains(&self.probe_tag) {
            return Err(bad("probe tag must not be a decoy tag"));
        }
        if self.time_start <= 0 || self.time_end <= self.time_start {
            return Err(bad("time window must be positive and non-empty"));
        }
        if first_monday(self.time_start) + WEEK > self.time_end {
            return Err(bad("time window must contain a full Monday-to-Sunday week"));
        }
        if let Some(s) = &self.planted_slang {
            if lexicon.contains(&s.tag) || self.decoy_vocabulary.contains(&s.tag) || s.tag == self.probe_tag {
                return Err(bad(format!("slang tag {:?} must be unknown", s.tag)));
            }
            let anchor = lexicon
                .get(&s.anchor)
                .ok_or_else(|| bad(format!("slang anchor {:?} is not a lexicon term", s.anchor)))?;
            let class = anchor
                .category
                .drug_class()
                .ok_or_else(|| bad("slang anchor must belong to a drug class"))?;
            let share = self.class_weights.normalized()[class_index(class)];
            if !(s.rate > 0.0 && s.rate <= share) {
                return Err(bad(format!("slang rate {} must lie in (0, {share:.4}]", s.rate)));
            }
            if s.near_miss_posts > 0 && self.drug_users == 0 {
                return Err(bad("near-miss posts need drug users"));
            }
        }
        if let Some(g) = &self.geo {
            check_fraction("geo.geotag_fraction", g.geotag_fraction)?;
            check_fraction("geo.outside_user_fraction", g.outside_user_fraction)?;
            g.region.validate().map_err(|e| bad(e.to_string()))?;
            let mut w: Vec<f64> = g.hotspots.iter().map(|h| h.weight).collect();
            w.push(g.noise_weight);
            check_weights("geo weights", &w, w.len())?;
            if g.hotspots.iter().any(|h| !(h.sigma_m > 0.0)) {
                return Err(bad("hotspot sigma must be positive"));
            }
        }
        if let Some(d) = &self.demographics {
            check_fraction("demographics.female_fraction", d.female_fraction)?;
            check_fraction("demographics.faceless_fraction", d.faceless_fraction)?;
            check_fraction("demographics.extra_face_rate", d.extra_face_rate)?;
            let w: Vec<f64> = d.age_bands.iter().map(|b| b.weight).collect();
            check_weights("age bands", &w, w.len())?;
            if d.age_bands.iter().any(|b| b.min > b.max) || !(d.face_sigma >= 0.0) {
                return Err(bad("age bands must be ordered and face_sigma non-negative"));
            }
        }
        if let Some(n) = &self.network {
            check_fraction("network.mutual_rate", n.mutual_rate)?;
            check_fraction("network.dealer_follow_rate", n.dealer_follow_rate)?;
            if n.follows_per_user > n.pool_size {
                return Err(bad("follows_per_user exceeds the account pool"));
            }
            for p in &n.pages {
                check_fraction(&format!("page {} drug_rate", p.id), p.drug_rate)?;
                check_fraction(&format!("page {} nondrug_rate", p.id), p.nondrug_rate)?;
            }
        }
        Ok(())
    }
}

fn class_index(c: DrugClass) -> usize {
    DrugClass::ALL.iter().position(|x| *x == c).expect("known class")
}

fn class_vocab(lexicon: &Lexicon, class: DrugClass) -> Vec<String> {
    lexicon
        .terms()
        .filter(|t| t.status == TermStatus::Seed && t.category.drug_class() == Some(class))
        .map(|t| t.text.clone())
        .collect()
}

fn first_monday(t: i64) -> i64 {
    let k = (t - FIRST_MONDAY).div_euclid(WEEK);
    let m = FIRST_MONDAY + k * WEEK;
    if m < t {
        m + WEEK
    } else {
        m
    }
}

fn exact_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

struct Sampler<'a> {
    spec: &'a GeneratorSpec,
    rng: ChaCha8Rng,
    weeks: i64,
    monday: i64,
    weekday: WeightedIndex<f64>,
    class_hours: [WeightedIndex<f64>; 3],
    flat_hours: WeightedIndex<f64>,
}

impl Sampler<'_> {
    fn timestamp(&mut self, hours: Option<DrugClass>) -> i64 {
        let week = self.rng.random_range(0..self.weeks);
        let day = self.weekday.sample(&mut self.rng) as i64;
        let hour = match hours {
            Some(c) => self.class_hours[class_index(c)].sample(&mut self.rng),
            None => self.flat_hours.sample(&mut self.rng),
        } as i64;
        let sec = self.rng.random_range(0..3600);
        self.monday + week * WEEK + day * DAY + hour * 3600 + sec
    }

    fn decoys(&mut self) -> Vec<String> {
        let (lo, hi) = self.spec.decoy_tags_per_post;
        let k = self.rng.random_range(lo..=hi);
        self.spec
            .decoy_vocabulary
            .choose_multiple(&mut self.rng, k)
            .cloned()
            .collect()
    }
}

struct Draft {
    post: Post,
    truth: TruthRecord,
}

/// Generates a corpus from `spec`, reproducibly for a given `seed`.
pub fn generate_synthetic(spec: &GeneratorSpec, seed: u64) -> Result<GeneratorOutput, SpecError> {
    let lexicon = Lexicon::shipped();
    spec.validate(&lexicon)?;
    let weighted = |w: &[f64]| WeightedIndex::new(w.iter().copied()).map_err(|e| bad(e.to_string()));
    let class_hours = [
        weighted(spec.class_hours.weed.as_ref().unwrap_or(&spec.hour_weights))?,
        weighted(spec.class_hours.syrup.as_ref().unwrap_or(&spec.hour_weights))?,
        weighted(spec.class_hours.pills.as_ref().unwrap_or(&spec.hour_weights))?,
    ];
    let monday = first_monday(spec.time_start);
    let mut s = Sampler {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        weeks: (spec.time_end - monday) / WEEK,
        monday,
        weekday: weighted(&spec.weekday_weights)?,
        class_hours,
        flat_hours: weighted(&[1.0; 24])?,
    };

    let vocab: Vec<Vec<String>> = DrugClass::ALL.iter().map(|c| class_vocab(&lexicon, *c)).collect();
    let general: Vec<String> = lexicon
        .terms()
        .filter(|t| t.category.drug_class().is_none() && !lexicon.is_selfie_tag(&t.text))
        .map(|t| t.text.clone())
        .collect();
    let all_terms: Vec<String> = lexicon.terms().map(|t| t.text.clone()).collect();
    let selfie_tags: Vec<String> = lexicon.selfie_tags().iter().cloned().collect();

    // user ids do not reveal the population a user was drawn from
    let n_users = spec.drug_users + spec.decoy_users + spec.nondrug_users;
    let mut labels: Vec<usize> = (0..n_users).collect();
    labels.shuffle(&mut s.rng);
    let uid = |i: usize| format!("u{:06}", labels[i]);
    let drug_ids: Vec<String> = (0..spec.drug_users).map(uid).collect();
    let decoy_ids: Vec<String> = (spec.drug_users..spec.drug_users + spec.decoy_users).map(uid).collect();
    let nondrug_ids: Vec<String> = (spec.drug_users + spec.decoy_users..n_users).map(uid).collect();

    let mut drafts: Vec<Draft> = Vec::new();
    let push = |drafts: &mut Vec<Draft>, user: &str, ts: i64, tags: Vec<String>, truth: TruthRecord| {
        drafts.push(Draft {
            post: Post {
                media_id: String::new(),
                user_id: user.to_string(),
                username: format!("name_{user}"),
                created_at: ts,
                hashtags: tags,
                caption: String::new(),
                geo: None,
                media_ref: None,
            },
            truth,
        });
    };
    let truth = |user: &str, is_drug: bool, class: Option<DrugClass>, cohort: Cohort| TruthRecord {
        media_id: String::new(),
        user_id: user.to_string(),
        is_drug,
        class,
        cohort,
        slang: false,
        near_miss: false,
    };

    // drug posts: one class each, slang posts forced to the anchor's class
    let shares = spec.class_weights.normalized();
    let slang = spec.planted_slang.as_ref();
    let anchor_class = slang.and_then(|p| lexicon.get(&p.anchor)).and_then(|t| t.category.drug_class());
    let rest_weights: Vec<f64> = DrugClass::ALL
        .iter()
        .enumerate()
        .map(|(i, c)| match (slang, anchor_class) {
            (Some(p), Some(a)) if a == *c => (shares[i] - p.rate).max(0.0),
            _ => shares[i],
        })
        .collect();
    let rest_class = weighted(&rest_weights)?;
    let n_drug_posts = spec.drug_users * spec.drug_posts_per_user;
    let n_slang = slang.map_or(0, |p| (p.rate * n_drug_posts as f64).round() as usize);
    let mut slang_slots: Vec<bool> = (0..n_drug_posts).map(|i| i < n_slang).collect();
    slang_slots.shuffle(&mut s.rng);

    let mut geo_users: Vec<bool> = vec![false; spec.drug_users];
    if let Some(g) = &spec.geo {
        let k = exact_count(g.outside_user_fraction, spec.drug_users);
        for i in 0..k {
            geo_users[i] = true;
        }
        geo_users.shuffle(&mut s.rng);
    }
    let mut drug_geo: Vec<Option<bool>> = Vec::new();

    for (ui, user) in drug_ids.iter().enumerate() {
        for j in 0..spec.drug_posts_per_user {
            let is_slang = slang_slots[ui * spec.drug_posts_per_user + j];
            let class = match (is_slang, anchor_class) {
                (true, Some(a)) => a,
                _ => DrugClass::ALL[rest_class.sample(&mut s.rng)],
            };
            let (lo, hi) = spec.drug_tags_per_post;
            let k = s.rng.random_range(lo..=hi);
            let pool = &vocab[class_index(class)];
            let mut tags: Vec<String> = if is_slang {
                let anchor = &slang.expect("slang slot").anchor;
                let mut t = vec![anchor.clone()];
                let others: Vec<&String> = pool.iter().filter(|x| *x != anchor).collect();
                t.extend(others.choose_multiple(&mut s.rng, k - 1).map(|x| (*x).clone()));
                t.push(slang.expect("slang slot").tag.clone());
                t
            } else {
                pool.choose_multiple(&mut s.rng, k).cloned().collect()
            };
            if s.rng.random_bool(spec.general_tag_rate) {
                if let Some(g) = general.choose(&mut s.rng) {
                    tags.push(g.clone());
                }
            }
            tags.extend(s.decoys());
            tags.shuffle(&mut s.rng);
            let ts = s.timestamp(Some(class));
            let mut t = truth(user, true, Some(class), Cohort::Drug);
            t.slang = is_slang;
            push(&mut drafts, user, ts, tags, t);
            drug_geo.push(spec.geo.as_ref().map(|_| geo_users[ui]));
        }
        for _ in 0..spec.filler_posts_per_user {
            let ts = s.timestamp(None);
            let tags = s.decoys();
            push(&mut drafts, user, ts, tags, truth(user, false, None, Cohort::Drug));
            drug_geo.push(None);
        }
    }
    if let (Some(p), false) = (slang, drug_ids.is_empty()) {
        for _ in 0..p.near_miss_posts {
            let user = drug_ids.choose(&mut s.rng).expect("drug users").clone();
            let mut tags = vec![p.anchor.clone(), p.tag.clone()];
            tags.extend(s.decoys());
            tags.shuffle(&mut s.rng);
            let ts = s.timestamp(anchor_class);
            let mut t = truth(&user, false, None, Cohort::Drug);
            t.near_miss = true;
            push(&mut drafts, &user, ts, tags, t);
            drug_geo.push(None);
        }
    }

    // selfie posts: an exact number of drug users pass the filter, some others post one
    let mut order: Vec<usize> = (0..spec.drug_users).collect();
    order.shuffle(&mut s.rng);
    let n_pass = exact_count(spec.selfie_user_fraction, spec.drug_users);
    let mut selfie_users: Vec<String> = order[..n_pass].iter().map(|&i| drug_ids[i].clone()).collect();
    let mut selfie_posts: Vec<(usize, String)> = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let user = &drug_ids[i];
        let n = if rank < n_pass {
            let (lo, hi) = spec.selfie_posts_per_user;
            s.rng.random_range(lo..=hi)
        } else {
            s.rng.random_range(0..=1)
        };
        for _ in 0..n {
            let mut tags = vec![selfie_tags.choose(&mut s.rng).expect("selfie tags").clone()];
            tags.extend(s.decoys());
            let ts = s.timestamp(None);
            selfie_posts.push((drafts.len(), user.clone()));
            push(&mut drafts, user, ts, tags, truth(user, false, None, Cohort::Drug));
            drug_geo.push(None);
        }
    }
    selfie_users.sort();

    let n_probe_decoys = exact_count(spec.decoy_probe_fraction, spec.decoy_users);
    for (i, user) in decoy_ids.iter().enumerate() {
        for j in 0..spec.decoy_posts_per_user {
            let mut tags = s.decoys();
            if j == 0 {
                tags.push(all_terms.choose(&mut s.rng).expect("lexicon").clone());
            }
            if j == 1 % spec.decoy_posts_per_user.max(1) && i < n_probe_decoys {
                tags.push(spec.probe_tag.clone());
            }
            tags.shuffle(&mut s.rng);
            let ts = s.timestamp(None);
            push(&mut drafts, user, ts, tags, truth(user, false, None, Cohort::Unlabeled));
            drug_geo.push(None);
        }
    }
    for user in &nondrug_ids {
        for j in 0..spec.nondrug_posts_per_user {
            let mut tags = s.decoys();
            if j == 0 {
                tags.push(spec.probe_tag.clone());
            }
            let ts = s.timestamp(None);
            push(&mut drafts, user, ts, tags, truth(user, false, None, Cohort::Nondrug));
            drug_geo.push(None);
        }
    }

    // coordinates for a share of drug posts
    let mut geocoder_rules = Vec::new();
    if let Some(g) = &spec.geo {
        let mut w: Vec<f64> = g.hotspots.iter().map(|h| h.weight).collect();
        w.push(g.noise_weight);
        let pick = weighted(&w)?;
        let outside = outside_point(g.region);
        for (d, flag) in drafts.iter_mut().zip(&drug_geo) {
            let Some(is_outside) = flag else { continue };
            if !s.rng.random_bool(g.geotag_fraction) {
                continue;
            }
            let geo = if *is_outside {
                gaussian_around(&mut s.rng, outside, OUTSIDE_SPREAD_M)
            } else {
                let k = pick.sample(&mut s.rng);
                match g.hotspots.get(k) {
                    Some(h) => gaussian_around(&mut s.rng, Geo::new(h.lat, h.lon), h.sigma_m),
                    None => g.region.sample(&mut s.rng),
                }
            };
            d.post.geo = Some(geo);
        }
        geocoder_rules = g
            .hotspots
            .iter()
            .filter_map(|h| {
                h.venue.map(|category| GeocoderRule {
                    lat: h.lat,
                    lon: h.lon,
                    radius: 3.0 * h.sigma_m,
                    category,
                })
            })
            .collect();
    }

    // time order, then stable media ids
    let mut idx: Vec<usize> = (0..drafts.len()).collect();
    idx.sort_by_key(|&i| (drafts[i].post.created_at, i));
    let mut rank = vec![0usize; drafts.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
        let id = format!("m{r:08}");
        drafts[i].post.media_id = id.clone();
        drafts[i].truth.media_id = id;
    }

    let mut faces = Vec::new();
    if let Some(d) = &spec.demographics {
        faces = plant_faces(&mut s.rng, d, &selfie_users, &selfie_posts, &mut drafts)?;
        faces.sort_by(|a, b| a.media_ref.cmp(&b.media_ref));
    }

    let (edges, nodes) = match &spec.network {
        Some(n) => plant_network(&mut s.rng, n, &drug_ids, &nondrug_ids),
        None => (Vec::new(), Vec::new()),
    };

    let mut posts = Vec::with_capacity(drafts.len());
    let mut truths = Vec::with_capacity(drafts.len());
    for &i in &idx {
        let d = &drafts[i];
        posts.push(d.post.clone());
        if s.rng.random_bool(spec.duplicate_fraction) {
            posts.push(d.post.clone());
        }
        truths.push(d.truth.clone());
    }

    Ok(GeneratorOutput {
        spec: spec.clone(),
        seed,
        posts,
        truth: truths,
        faces,
        edges,
        nodes,
        geocoder_rules,
        selfie_users,
    })
}

/// Scatter of out-of-region posts, wide enough that they never cluster.
const OUTSIDE_SPREAD_M: f64 = 200_000.0;

fn outside_point(region: BoundingBox) -> Geo {
    let c = region.center();
    // 30 degrees west, or east when that would cross the antimeridian
    let lon = if c.lon - 30.0 >= -180.0 { c.lon - 30.0 } else { c.lon + 30.0 };
    Geo::new(c.lat, lon)
}

fn gaussian_around(rng: &mut ChaCha8Rng, center: Geo, sigma_m: f64) -> Geo {
    let n = Normal::new(0.0, sigma_m).expect("positive sigma");
    let dy: f64 = n.sample(rng);
    let dx: f64 = n.sample(rng);
    let lat = (center.lat + dy / M_PER_DEG_LAT).clamp(-90.0, 90.0);
    let lon = center.lon + dx / (M_PER_DEG_LAT * center.lat.to_radians().cos());
    Geo::new(lat, lon.clamp(-180.0, 180.0))
}

fn plant_faces(
    rng: &mut ChaCha8Rng,
    spec: &DemographicSpec,
    selfie_users: &[String],
    selfie_posts: &[(usize, String)],
    drafts: &mut [Draft],
) -> Result<Vec<FaceFixtureLine>, SpecError> {
    let bands = WeightedIndex::new(spec.age_bands.iter().map(|b| b.weight)).map_err(|e| bad(e.to_string()))?;
    let mut shuffled = selfie_users.to_vec();
    shuffled.shuffle(rng);
    let n_female = exact_count(spec.female_fraction, shuffled.len());
    let mut people: BTreeMap<String, (f64, Gender)> = BTreeMap::new();
    for (i, u) in shuffled.iter().enumerate() {
        let band = &spec.age_bands[bands.sample(rng)];
        let age = if band.max > band.min {
            rng.random_range(band.min..band.max)
        } else {
            band.min
        };
        let gender = if i < n_female { Gender::Female } else { Gender::Male };
        people.insert(u.clone(), (age, gender));
    }
    let passing: BTreeSet<&String> = selfie_users.iter().collect();
    // every passing user keeps at least one face-bearing selfie
    let mut has_face: BTreeSet<String> = BTreeSet::new();
    let jitter = Normal::new(0.0, spec.face_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut out = Vec::new();
    for (draft_idx, user) in selfie_posts {
        let d = &mut drafts[*draft_idx];
        let media_ref = format!("img/{}.jpg", d.post.media_id);
        d.post.media_ref = Some(media_ref.clone());
        let (age, gender) = match people.get(user) {
            Some(p) => *p,
            None => (rng.random_range(15.0..45.0), if rng.random_bool(0.5) { Gender::Female } else { Gender::Male }),
        };
        let faceless = rng.random_bool(spec.faceless_fraction) && (!passing.contains(user) || has_face.contains(user));
        let mut faces = Vec::new();
        if !faceless {
            has_face.insert(user.clone());
            let side = rng.random_range(120.0..240.0);
            let est: f64 = if spec.face_sigma > 0.0 { age + jitter.sample(rng) } else { age };
            faces.push(FixtureFace {
                rect: FaceRect::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0), side, side),
                age: est.max(1.0),
                gender,
            });
            if rng.random_bool(spec.extra_face_rate) {
                let small = side * rng.random_range(0.3..0.8);
                faces.push(FixtureFace {
                    rect: FaceRect::new(rng.random_range(0.0..400.0), rng.random_range(0.0..400.0), small, small),
                    age: rng.random_range(15.0..60.0),
                    gender: if rng.random_bool(0.5) { Gender::Female } else { Gender::Male },
                });
                faces.shuffle(rng);
            }
        }
        out.push(FaceFixtureLine { media_ref, faces });
    }
    Ok(out)
}

fn plant_network(
    rng: &mut ChaCha8Rng,
    spec: &NetworkSpec,
    drug_ids: &[String],
    nondrug_ids: &[String],
) -> (Vec<(String, String)>, Vec<NodeMeta>) {
    let pool: Vec<String> = (0..spec.pool_size).map(|i| format!("acct{i:05}")).collect();
    let dealers: Vec<String> = (0..spec.dealers).map(|i| format!("dealer{i:03}")).collect();
    let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
    let mut nodes = Vec::new();
    for (ids, cohort) in [(drug_ids, Cohort::Drug), (nondrug_ids, Cohort::Nondrug)] {
        for id in ids {
            nodes.push(NodeMeta {
                id: id.clone(),
                role: Role::User,
                cohort,
            });
        }
    }
    for d in &dealers {
        nodes.push(NodeMeta {
            id: d.clone(),
            role: Role::Dealer,
            cohort: Cohort::Drug,
        });
    }
    for p in &spec.pages {
        nodes.push(NodeMeta {
            id: p.id.clone(),
            role: p.role,
            cohort: Cohort::Unlabeled,
        });
    }

    // pool popularity falls off with rank so a few accounts collect many followers
    let popularity =
        WeightedIndex::new((0..spec.pool_size.max(1)).map(|i| 1.0 / (i as f64 + 1.0).sqrt())).expect("pool weights");
    let follow_pool = |rng: &mut ChaCha8Rng, who: &str, n: usize, edges: &mut BTreeSet<(String, String)>| {
        let mut chosen = BTreeSet::new();
        while chosen.len() < n.min(spec.pool_size) {
            chosen.insert(popularity.sample(rng));
        }
        for i in chosen {
            edges.insert((who.to_string(), pool[i].clone()));
        }
    };
    for id in drug_ids.iter().chain(nondrug_ids).chain(&dealers) {
        let n = if id.starts_with("dealer") {
            spec.follows_per_user / 2
        } else {
            spec.follows_per_user
        };
        follow_pool(rng, id, n, &mut edges);
    }
    // followers of each page are prefixes of one order per cohort, so a
    // page's audience contains that of every less followed page
    for (ids, drug) in [(drug_ids, true), (nondrug_ids, false)] {
        let mut order: Vec<&String> = ids.iter().collect();
        order.shuffle(rng);
        for p in &spec.pages {
            let rate = if drug { p.drug_rate } else { p.nondrug_rate };
            for u in order.iter().take(exact_count(rate, ids.len())) {
                edges.insert(((*u).clone(), p.id.clone()));
            }
        }
    }
    for u in drug_ids {
        for d in &dealers {
            if rng.random_bool(spec.dealer_follow_rate) {
                edges.insert((u.clone(), d.clone()));
            }
        }
    }
    // a few follows inside each cohort, some returned
    for ids in [drug_ids, nondrug_ids] {
        if ids.len() < 2 {
            continue;
        }
        for u in ids {
            for _ in 0..3 {
                let v = ids.choose(rng).expect("nonempty");
                if v != u {
                    edges.insert((u.clone(), v.clone()));
                    if rng.random_bool(spec.mutual_rate) {
                        edges.insert((v.clone(), u.clone()));
                    }
                }
            }
        }
    }
    (edges.into_iter().collect(), nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{is_drug_post, ClassificationConfig};

    fn small() -> GeneratorSpec {
        GeneratorSpec {
            drug_users: 40,
            drug_posts_per_user: 10,
            decoy_users: 10,
            nondrug_users: 20,
            planted_slang: Some(PlantedSlang {
                tag: "newslang".into(),
                anchor: "kush".into(),
                rate: 0.25,
                near_miss_posts: 20,
            }),
            network: Some(NetworkSpec {
                pool_size: 100,
                follows_per_user: 5,
                ..NetworkSpec::default()
            }),
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate_synthetic(&small(), 9).unwrap();
        let b = generate_synthetic(&small(), 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(), 10).unwrap();
        assert_ne!(a.posts, c.posts);
    }

    #[test]
    fn truth_matches_the_shipped_rule() {
        let out = generate_synthetic(&small(), 1).unwrap();
        let lex = Lexicon::shipped();
        let cfg = ClassificationConfig::default();
        let mut seen = BTreeSet::new();
        let by_id: BTreeMap<&str, &TruthRecord> = out.truth.iter().map(|t| (t.media_id.as_str(), t)).collect();
        for p in &out.posts {
            seen.insert(p.media_id.clone());
            assert_eq!(is_drug_post(p, &lex, &cfg).is_drug, by_id[p.media_id.as_str()].is_drug, "{p:?}");
        }
        assert_eq!(seen.len(), out.truth.len());
        let drug = out.truth.iter().filter(|t| t.is_drug).count();
        assert_eq!(drug, 400);
        let slang = out.truth.iter().filter(|t| t.slang).count();
        assert_eq!(slang, 100);
        assert_eq!(out.truth.iter().filter(|t| t.near_miss).count(), 20);
    }

    #[test]
    fn posts_are_time_ordered_and_valid() {
        let out = generate_synthetic(&small(), 2).unwrap();
        assert!(out.posts.windows(2).all(|w| w[0].created_at <= w[1].created_at));
        for p in &out.posts {
            assert_eq!(p.clone().normalized().unwrap(), *p);
            assert!(p.created_at >= out.spec.time_start && p.created_at < out.spec.time_end);
        }
    }

    #[test]
    fn exact_selfie_and_gender_counts() {
        let out = generate_synthetic(&small(), 3).unwrap();
        assert_eq!(out.selfie_users.len(), 14);
        let female_refs: BTreeSet<&str> = out
            .faces
            .iter()
            .filter(|f| f.faces.iter().any(|x| x.gender == Gender::Female))
            .map(|f| f.media_ref.as_str())
            .collect();
        assert!(!female_refs.is_empty());
    }

    #[test]
    fn spec_validation() {
        let lex = Lexicon::shipped();
        let mut s = GeneratorSpec::default();
        s.hour_weights = vec![1.0; 23];
        assert!(s.validate(&lex).is_err());
        let mut s = GeneratorSpec::default();
        s.decoy_vocabulary.push("kush".into());
        assert!(s.validate(&lex).is_err());
        let mut s = GeneratorSpec::default();
        s.drug_tags_per_post = (1, 3);
        assert!(s.validate(&lex).is_err());
        let mut s = GeneratorSpec::default();
        s.planted_slang.as_mut().unwrap().tag = "weed".into();
        assert!(s.validate(&lex).is_err());
        let mut s = GeneratorSpec::default();
        s.time_end = s.time_start + 3 * DAY;
        assert!(s.validate(&lex).is_err());
        assert!(GeneratorSpec::default().validate(&lex).is_ok());
    }

    #[test]
    fn week_alignment() {
        assert_eq!(crate::temporal::weekday(FIRST_MONDAY), 0);
        let m = first_monday(1_420_070_400);
        assert_eq!(crate::temporal::weekday(m), 0);
        assert_eq!(m % DAY, 0);
        assert!(m >= 1_420_070_400 && m - 1_420_070_400 < WEEK);
        assert_eq!(first_monday(m), m);
    }

    #[test]
    fn bundle_files() {
        let out = generate_synthetic(&small(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write_bundle(dir.path()).unwrap();
        for f in ["posts.jsonl", "truth.jsonl", "spec.json", "faces.jsonl", "follows.csv", "nodes.jsonl", "venues.jsonl"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
