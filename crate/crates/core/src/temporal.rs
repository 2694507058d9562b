//! Hour-of-day and day-of-week histograms, peak detection and divergence
//! from a baseline posting profile. All bins come from GMT timestamps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::attribute_classes;
use crate::corpus::Post;
use crate::lexicon::{DrugClass, Lexicon};

pub const DEFAULT_PEAK_PROMINENCE: f64 = 0.02;
pub const WEEKDAY_NAMES: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemporalError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("divergence needs an hour-of-day histogram")]
    WrongMode,
    #[error("baseline profile: {0}")]
    Baseline(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Hour,
    Weekday,
}

impl TimeMode {
    pub fn bins(self) -> usize {
        match self {
            TimeMode::Hour => 24,
            TimeMode::Weekday => 7,
        }
    }

    pub fn bin_of(self, ts: i64) -> usize {
        match self {
            TimeMode::Hour => hour_of_day(ts),
            TimeMode::Weekday => weekday(ts),
        }
    }
}

pub fn hour_of_day(ts: i64) -> usize {
    (ts.rem_euclid(86_400) / 3_600) as usize
}

/// Monday = 0. The epoch fell on a Thursday.
pub fn weekday(ts: i64) -> usize {
    (ts.div_euclid(86_400) + 3).rem_euclid(7) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeHistogram {
    pub mode: TimeMode,
    pub bins: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_filter: Option<DrugClass>,
    pub total: u64,
}

impl TimeHistogram {
    pub fn from_timestamps(mode: TimeMode, timestamps: impl IntoIterator<Item = i64>) -> Self {
        let mut bins = vec![0; mode.bins()];
        for ts in timestamps {
            bins[mode.bin_of(ts)] += 1;
        }
        let total = bins.iter().sum();
        Self {
            mode,
            bins,
            class_filter: None,
            total,
        }
    }

    /// Bin shares; all zeros when the histogram is empty.
    pub fn normalized(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.bins.len()];
        }
        self.bins.iter().map(|&b| b as f64 / self.total as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,label,count\n");
        for (i, c) in self.bins.iter().enumerate() {
            let label = match self.mode {
                TimeMode::Hour => format!("{i:02}:00"),
                TimeMode::Weekday => WEEKDAY_NAMES[i].to_string(),
            };
            out.push_str(&format!("{i},{label},{c}\n"));
        }
        out
    }
}

/// Counts posts into hour or weekday bins, optionally keeping only posts
/// attributed to one class.
pub fn histogram(posts: &[&Post], mode: TimeMode, class_filter: Option<DrugClass>, lexicon: &Lexicon) -> TimeHistogram {
    let selected = posts.iter().filter(|p| match class_filter {
        None => true,
        Some(c) => attribute_classes(p, lexicon).classes.contains(&c),
    });
    let mut h = TimeHistogram::from_timestamps(mode, selected.map(|p| p.created_at));
    h.class_filter = class_filter;
    h
}

/// Circular local maxima whose prominence exceeds `min_prominence * total`.
///
/// Prominence is measured on the circle: from the peak, walk each way until
/// a strictly higher bin (or all the way round), take the lowest bin seen on
/// each side, and subtract the higher of the two minima. A flat run counts
/// as one peak at its first bin. Result is sorted by height, then index.
pub fn detect_peaks(hist: &TimeHistogram, min_prominence: f64) -> Vec<usize> {
    let bins = &hist.bins;
    let n = bins.len();
    if n == 0 || hist.total == 0 {
        return Vec::new();
    }
    let threshold = min_prominence * hist.total as f64;
    let at = |i: isize| bins[i.rem_euclid(n as isize) as usize];
    let mut peaks = Vec::new();
    for i in 0..n {
        let h = bins[i];
        let ii = i as isize;
        if h <= at(ii - 1) || h < at(ii + 1) {
            continue;
        }
        let side_min = |step: isize| {
            let mut lo = h;
            for k in 1..n as isize {
                let v = at(ii + step * k);
                if v > h {
                    break;
                }
                lo = lo.min(v);
            }
            lo
        };
        let base = side_min(-1).max(side_min(1));
        if (h - base) as f64 > threshold {
            peaks.push(i);
        }
    }
    peaks.sort_by(|&a, &b| bins[b].cmp(&bins[a]).then(a.cmp(&b)));
    peaks
}

/// Hour-of-day posting profile: 24 nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BaselineProfile(Vec<f64>);

impl BaselineProfile {
    pub fn new(weights: Vec<f64>) -> Result<Self, TemporalError> {
        if weights.len() != 24 {
            return Err(TemporalError::Baseline(format!("expected 24 weights, got {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TemporalError::Baseline("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TemporalError::Baseline(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform() -> Self {
        Self(vec![1.0 / 24.0; 24])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for BaselineProfile {
    type Error = TemporalError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BaselineProfile> for Vec<f64> {
    fn from(b: BaselineProfile) -> Self {
        b.0
    }
}

/// Half the L1 distance between two distributions of equal length.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions differ in length");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total-variation distance between the normalized histogram and `baseline`.
pub fn divergence_from_baseline(hist: &TimeHistogram, baseline: &BaselineProfile) -> Result<f64, TemporalError> {
    if hist.mode != TimeMode::Hour {
        return Err(TemporalError::WrongMode);
    }
    if hist.total == 0 {
        return Err(TemporalError::EmptyHistogram);
    }
    Ok(total_variation(&hist.normalized(), baseline.weights()))
}
