//! Per-user age and gender from face observations.
//!
//! Faces come from a [`FaceAttributeProvider`]. For every face-bearing selfie
//! post the largest face is taken as the photographer's; a user's age is
//! the mean over those faces and gender is the strict majority label.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Post;
use crate::temporal::hour_of_day;

/// Declared per-face age standard deviation used by the stub provider.
pub const DEFAULT_PROVIDER_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemographicsError {
    #[error("no face detected")]
    NoFace,
    #[error("user {0} has no face-bearing selfie posts")]
    NoFaces(String),
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceRect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl FaceRect {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self { x, y, width, height }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceObservation {
    pub media_id: String,
    pub face_rect: FaceRect,
    pub age_estimate: f64,
    pub gender: Gender,
    pub provider_sigma: f64,
}

/// Source of face attributes for an image reference.
///
/// Implementations must be deterministic for a fixed reference.
pub trait FaceAttributeProvider {
    fn detect(&self, media_id: &str, media_ref: &str) -> Vec<FaceObservation>;
    fn sigma(&self) -> f64;
}

/// One face as written in a stub fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFace {
    pub rect: FaceRect,
    pub age: f64,
    pub gender: Gender,
}

/// One fixture line: every face found in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceFixtureLine {
    pub media_ref: String,
    pub faces: Vec<FixtureFace>,
}

/// Provider backed by a JSONL fixture mapping media references to faces.
#[derive(Debug, Clone, Default)]
pub struct StubFaceProvider {
    faces: HashMap<String, Vec<FixtureFace>>,
    sigma: f64,
}

impl StubFaceProvider {
    pub fn new(lines: impl IntoIterator<Item = FaceFixtureLine>, sigma: f64) -> Self {
        let mut faces: HashMap<String, Vec<FixtureFace>> = HashMap::new();
        for line in lines {
            faces.entry(line.media_ref).or_default().extend(line.faces);
        }
        Self { faces, sigma }
    }

    pub fn from_jsonl<R: BufRead>(reader: R, sigma: f64) -> Result<Self, DemographicsError> {
        let mut lines = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let err = |message: String| DemographicsError::Fixture { line: idx + 1, message };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FaceFixtureLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            if parsed.faces.iter().any(|f| f.rect.width <= 0.0 || f.rect.height <= 0.0) {
                return Err(err("face rect must have positive width and height".into()));
            }
            lines.push(parsed);
        }
        Ok(Self::new(lines, sigma))
    }
}

impl FaceAttributeProvider for StubFaceProvider {
    fn detect(&self, media_id: &str, media_ref: &str) -> Vec<FaceObservation> {
        self.faces
            .get(media_ref)
            .map(|faces| {
                faces
                    .iter()
                    .map(|f| FaceObservation {
                        media_id: media_id.to_string(),
                        face_rect: f.rect,
                        age_estimate: f.age,
                        gender: f.gender,
                        provider_sigma: self.sigma,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// The face with the largest bounding box; ties go to the smallest x, then y.
pub fn primary_face(observations: &[FaceObservation]) -> Result<&FaceObservation, DemographicsError> {
    observations
        .iter()
        .min_by(|a, b| {
            b.face_rect
                .area()
                .total_cmp(&a.face_rect.area())
                .then(a.face_rect.x.total_cmp(&b.face_rect.x))
                .then(a.face_rect.y.total_cmp(&b.face_rect.y))
        })
        .ok_or(DemographicsError::NoFace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBracket {
    #[serde(rename = "<15")]
    Under15,
    #[serde(rename = "15-20")]
    From15To20,
    #[serde(rename = "20-30")]
    From20To30,
    #[serde(rename = "30-40")]
    From30To40,
    #[serde(rename = ">40")]
    Over40,
}

impl AgeBracket {
    pub const ALL: [AgeBracket; 5] = [
        AgeBracket::Under15,
        AgeBracket::From15To20,
        AgeBracket::From20To30,
        AgeBracket::From30To40,
        AgeBracket::Over40,
    ];

    /// Left-closed brackets: 20.0 falls in 20-30.
    pub fn of(age: f64) -> Self {
        if age < 15.0 {
            AgeBracket::Under15
        } else if age < 20.0 {
            AgeBracket::From15To20
        } else if age < 30.0 {
            AgeBracket::From20To30
        } else if age < 40.0 {
            AgeBracket::From30To40
        } else {
            AgeBracket::Over40
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBracket::Under15 => "<15",
            AgeBracket::From15To20 => "15-20",
            AgeBracket::From20To30 => "20-30",
            AgeBracket::From30To40 => "30-40",
            AgeBracket::Over40 => ">40",
        }
    }
}

impl fmt::Display for AgeBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenderCall {
    Female,
    Male,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDemographics {
    pub user_id: String,
    pub n_faces: usize,
    pub mean_age: f64,
    pub age_stderr: f64,
    pub gender: GenderCall,
    pub bracket: AgeBracket,
}

/// Standard error of a mean of `n` faces with per-face deviation `sigma`.
pub fn age_stderr(sigma: f64, n_faces: usize) -> f64 {
    sigma / (n_faces as f64).sqrt()
}

/// Aggregates the primary faces of a user's selfie posts.
///
/// Posts without a media reference or without detected faces are skipped.
pub fn aggregate_user(
    user_id: &str,
    selfie_posts: &[&Post],
    provider: &dyn FaceAttributeProvider,
) -> Result<UserDemographics, DemographicsError> {
    let mut ages = Vec::new();
    let (mut female, mut male) = (0usize, 0usize);
    // sort so the floating-point sum does not depend on post order
    let mut posts: Vec<&&Post> = selfie_posts.iter().collect();
    posts.sort_by(|a, b| a.media_id.cmp(&b.media_id));
    for post in posts {
        let Some(media_ref) = post.media_ref.as_deref() else {
            continue;
        };
        let faces = provider.detect(&post.media_id, media_ref);
        let Ok(face) = primary_face(&faces) else {
            continue;
        };
        ages.push(face.age_estimate);
        match face.gender {
            Gender::Female => female += 1,
            Gender::Male => male += 1,
        }
    }
    if ages.is_empty() {
        return Err(DemographicsError::NoFaces(user_id.to_string()));
    }
    let n = ages.len();
    let mean_age = ages.iter().sum::<f64>() / n as f64;
    let gender = match female.cmp(&male) {
        std::cmp::Ordering::Greater => GenderCall::Female,
        std::cmp::Ordering::Less => GenderCall::Male,
        std::cmp::Ordering::Equal => GenderCall::Undetermined,
    };
    Ok(UserDemographics {
        user_id: user_id.to_string(),
        n_faces: n,
        mean_age,
        age_stderr: age_stderr(provider.sigma(), n),
        gender,
        bracket: AgeBracket::of(mean_age),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderCounts {
    pub female: u64,
    pub male: u64,
    pub undetermined: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicReport {
    pub users: u64,
    /// Users by whole years of mean age.
    pub age_histogram: BTreeMap<u32, u64>,
    pub bracket_counts: BTreeMap<AgeBracket, u64>,
    pub gender: GenderCounts,
    /// Hour-of-day counts of the cohort's drug posts, split by the author's bracket.
    pub stacked_hourly: BTreeMap<AgeBracket, Vec<u64>>,
    pub excluded_no_faces: u64,
}

/// Age, gender and bracket-stacked hourly distributions for a cohort.
pub fn cohort_report(users: &[UserDemographics], drug_posts: &[&Post], excluded_no_faces: u64) -> DemographicReport {
    let mut age_histogram = BTreeMap::new();
    let mut bracket_counts: BTreeMap<AgeBracket, u64> = AgeBracket::ALL.iter().map(|b| (*b, 0)).collect();
    let mut stacked_hourly: BTreeMap<AgeBracket, Vec<u64>> =
        AgeBracket::ALL.iter().map(|b| (*b, vec![0; 24])).collect();
    let mut gender = GenderCounts::default();
    let mut bracket_of: HashMap<&str, AgeBracket> = HashMap::new();

    for u in users {
        *age_histogram.entry(u.mean_age.max(0.0).floor() as u32).or_insert(0) += 1;
        *bracket_counts.get_mut(&u.bracket).expect("all brackets") += 1;
        match u.gender {
            GenderCall::Female => gender.female += 1,
            GenderCall::Male => gender.male += 1,
            GenderCall::Undetermined => gender.undetermined += 1,
        }
        bracket_of.insert(u.user_id.as_str(), u.bracket);
    }
    for p in drug_posts {
        if let Some(b) = bracket_of.get(p.user_id.as_str()) {
            stacked_hourly.get_mut(b).expect("all brackets")[hour_of_day(p.created_at)] += 1;
        }
    }
    DemographicReport {
        users: users.len() as u64,
        age_histogram,
        bracket_counts,
        gender,
        stacked_hourly,
        excluded_no_faces,
    }
}
