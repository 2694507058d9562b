//! Circle-cover planning, per-circle retrieval, hotspot clustering and
//! venue categorization.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{Geo, Post};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Largest radius a location query may use.
pub const MAX_QUERY_RADIUS_M: f64 = 5000.0;
/// Regions must span less than this many degrees of latitude.
pub const MAX_REGION_LAT_SPAN: f64 = 5.0;
/// Lattice spacing is computed for a radius this much smaller than requested,
/// absorbing the gap between the planar lattice and great-circle distance.
pub const COVER_SAFETY: f64 = 0.99;
/// Time span served by one request of a circle query.
pub const REQUEST_SLICE_SECS: i64 = 7 * 86_400;

const M_PER_DEG_LAT: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("radius {0} m outside (0, 5000]")]
    Radius(f64),
    #[error("time window [{0}, {1}] is empty")]
    Window(i64, i64),
    #[error("coordinates ({0}, {1}) out of range")]
    Coordinates(f64, f64),
    #[error("region spans {0} degrees of latitude, limit is 5")]
    RegionTooLarge(f64),
    #[error("region bounds are inverted")]
    InvertedRegion,
    #[error("invalid clustering parameters: {0}")]
    ClusterConfig(String),
    #[error("geocoder fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
}

/// Great-circle distance in meters on a sphere of radius 6,371 km.
pub fn haversine(a: Geo, b: Geo) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Self {
        Self { min_lat, min_lon, max_lat, max_lon }
    }

    pub fn point(g: Geo) -> Self {
        Self::new(g.lat, g.lon, g.lat, g.lon)
    }

    /// Box of roughly `width_m` by `height_m` centered on `center`.
    pub fn around(center: Geo, width_m: f64, height_m: f64) -> Self {
        let dlat = height_m / 2.0 / M_PER_DEG_LAT;
        let dlon = width_m / 2.0 / (M_PER_DEG_LAT * center.lat.to_radians().cos());
        Self::new(center.lat - dlat, center.lon - dlon, center.lat + dlat, center.lon + dlon)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        for g in [Geo::new(self.min_lat, self.min_lon), Geo::new(self.max_lat, self.max_lon)] {
            if !g.is_valid() {
                return Err(GeoError::Coordinates(g.lat, g.lon));
            }
        }
        if self.min_lat > self.max_lat || self.min_lon > self.max_lon {
            return Err(GeoError::InvertedRegion);
        }
        Ok(())
    }

    pub fn contains(&self, g: Geo) -> bool {
        (self.min_lat..=self.max_lat).contains(&g.lat) && (self.min_lon..=self.max_lon).contains(&g.lon)
    }

    pub fn is_point(&self) -> bool {
        self.min_lat == self.max_lat && self.min_lon == self.max_lon
    }

    pub fn center(&self) -> Geo {
        Geo::new((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Geo {
        Geo::new(
            self.min_lat + rng.random::<f64>() * (self.max_lat - self.min_lat),
            self.min_lon + rng.random::<f64>() * (self.max_lon - self.min_lon),
        )
    }
}

/// One location search: posts within `radius` meters of a center, created
/// inside `[min_time, max_time]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleQuery {
    pub min_time: i64,
    pub max_time: i64,
    pub radius: f64,
    pub lat: f64,
    pub lon: f64,
}

impl CircleQuery {
    /// Builds a query, accepting the time pair in either order.
    pub fn new(t1: i64, t2: i64, radius: f64, lat: f64, lon: f64) -> Result<Self, GeoError> {
        let q = Self {
            min_time: t1.min(t2),
            max_time: t1.max(t2),
            radius,
            lat,
            lon,
        };
        q.validate()?;
        Ok(q)
    }

    /// Parses the bracketed form `[time, time, radius, lat, lon]`.
    pub fn from_params(params: [f64; 5]) -> Result<Self, GeoError> {
        let [t1, t2, r, lat, lon] = params;
        Self::new(t1 as i64, t2 as i64, r, lat, lon)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.min_time >= self.max_time {
            return Err(GeoError::Window(self.min_time, self.max_time));
        }
        if !(self.radius > 0.0 && self.radius <= MAX_QUERY_RADIUS_M) {
            return Err(GeoError::Radius(self.radius));
        }
        if !self.center().is_valid() {
            return Err(GeoError::Coordinates(self.lat, self.lon));
        }
        Ok(())
    }

    pub fn center(&self) -> Geo {
        Geo::new(self.lat, self.lon)
    }

    pub fn covers(&self, g: Geo) -> bool {
        haversine(self.center(), g) <= self.radius
    }

    pub fn matches(&self, post: &Post) -> bool {
        (self.min_time..=self.max_time).contains(&post.created_at) && post.geo.is_some_and(|g| self.covers(g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePlan {
    pub region: BoundingBox,
    pub radius: f64,
    pub circles: Vec<CircleQuery>,
    /// One request per circle per week-long slice of the window.
    pub estimated_requests: u64,
}

/// Hexagonal lattice of circles covering `region`.
///
/// Centers sit `r·√3` apart along rows spaced `1.5·r`, odd rows shifted by
/// half a step; longitude spacing uses the region's widest parallel so the
/// cover holds at every latitude in the box.
pub fn plan_cover(region: BoundingBox, radius: f64, window: (i64, i64)) -> Result<CoveragePlan, GeoError> {
    region.validate()?;
    let span = region.max_lat - region.min_lat;
    if span >= MAX_REGION_LAT_SPAN {
        return Err(GeoError::RegionTooLarge(span));
    }
    let (t0, t1) = (window.0.min(window.1), window.0.max(window.1));
    let circle = |g: Geo| CircleQuery::new(t0, t1, radius, g.lat, g.lon);

    let circles = if region.is_point() {
        vec![circle(region.center())?]
    } else {
        circle(region.center())?;
        let r = radius * COVER_SAFETY;
        let step = r * 3f64.sqrt();
        let pitch = 1.5 * r;
        let widest = if region.min_lat <= 0.0 && region.max_lat >= 0.0 {
            0.0
        } else {
            region.min_lat.abs().min(region.max_lat.abs())
        };
        let m_per_deg_lon = M_PER_DEG_LAT * widest.to_radians().cos();
        let height = span * M_PER_DEG_LAT;
        let width = (region.max_lon - region.min_lon) * m_per_deg_lon;

        let mut out = Vec::new();
        let mut row = 0usize;
        loop {
            let y = row as f64 * pitch;
            if y >= height + r {
                break;
            }
            let mut x = if row % 2 == 0 { 0.0 } else { -step / 2.0 };
            while x <= width + step / 2.0 {
                let lat = (region.min_lat + y / M_PER_DEG_LAT).min(90.0);
                let lon = region.min_lon + x / m_per_deg_lon;
                out.push(circle(Geo::new(lat, lon.clamp(-180.0, 180.0)))?);
                x += step;
            }
            row += 1;
        }
        out
    };
    let slices = ((t1 - t0) as u64).div_ceil(REQUEST_SLICE_SECS as u64).max(1);
    Ok(CoveragePlan {
        region,
        radius,
        estimated_requests: circles.len() as u64 * slices,
        circles,
    })
}

impl CoveragePlan {
    /// Samples `n` uniform points of the region and counts those no circle covers.
    pub fn uncovered_samples(&self, n: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .filter(|_| {
                let p = self.region.sample(&mut rng);
                !self.circles.iter().any(|c| c.covers(p))
            })
            .count()
    }
}

/// Posts each circle would return, one list per circle in plan order.
pub fn fetch_circles(plan: &CoveragePlan, posts: &[Post]) -> Vec<Vec<Post>> {
    plan.circles
        .iter()
        .map(|c| posts.iter().filter(|p| c.matches(p)).cloned().collect())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub input: u64,
    pub kept: u64,
    pub duplicates: u64,
    /// Share of retrieved posts that were repeats.
    pub overlap_ratio: f64,
}

/// Merges per-circle results keeping the first copy of each media id.
pub fn dedup(results: impl IntoIterator<Item = Vec<Post>>) -> (Vec<Post>, DedupReport) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut input = 0u64;
    for post in results.into_iter().flatten() {
        input += 1;
        if seen.insert(post.media_id.clone()) {
            kept.push(post);
        }
    }
    let duplicates = input - kept.len() as u64;
    let report = DedupReport {
        input,
        kept: kept.len() as u64,
        duplicates,
        overlap_ratio: if input == 0 { 0.0 } else { duplicates as f64 / input as f64 },
    };
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub media_id: String,
    pub geo: Geo,
}

impl GeoPoint {
    pub fn new(media_id: impl Into<String>, lat: f64, lon: f64) -> Self {
        Self {
            media_id: media_id.into(),
            geo: Geo::new(lat, lon),
        }
    }

    pub fn from_post(post: &Post) -> Option<Self> {
        post.geo.map(|geo| Self {
            media_id: post.media_id.clone(),
            geo,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub eps_m: f64,
    pub min_points: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            eps_m: 150.0,
            min_points: 5,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.eps_m > 0.0 && self.eps_m.is_finite()) {
            return Err(GeoError::ClusterConfig(format!("eps_m {} must be positive", self.eps_m)));
        }
        if self.min_points == 0 {
            return Err(GeoError::ClusterConfig("min_points must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VenueCategory {
    Residential,
    Club,
    Restaurant,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    /// Sorted media ids.
    pub members: Vec<String>,
    pub centroid: Geo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue_category: Option<VenueCategory>,
}

/// Density clustering of geotagged posts.
///
/// Points within `eps_m` of each other are neighbors (a point neighbors
/// itself). Points with at least `min_points` neighbors are core; connected
/// core points form a cluster, and every other point next to a core point
/// joins the cluster of its smallest-id core neighbor. Clusters that end up
/// smaller than `min_points` are dropped. Output is independent of input order.
pub fn cluster_hotspots(points: &[GeoPoint], config: ClusterConfig) -> Result<Vec<Cluster>, GeoError> {
    config.validate()?;
    let mut pts: Vec<&GeoPoint> = points.iter().collect();
    pts.sort_by(|a, b| {
        a.media_id
            .cmp(&b.media_id)
            .then(a.geo.lat.total_cmp(&b.geo.lat))
            .then(a.geo.lon.total_cmp(&b.geo.lon))
    });
    pts.dedup_by(|a, b| a.media_id == b.media_id);
    let n = pts.len();
    let neighbors = neighbor_lists(&pts, config.eps_m);
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= config.min_points).collect();

    let mut label = vec![usize::MAX; n];
    let mut n_clusters = 0;
    for start in 0..n {
        if !core[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = n_clusters;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if core[j] && label[j] == usize::MAX {
                    label[j] = n_clusters;
                    stack.push(j);
                }
            }
        }
        n_clusters += 1;
    }
    for i in 0..n {
        if !core[i] {
            // neighbor lists are sorted, so the first core neighbor has the smallest id
            if let Some(&j) = neighbors[i].iter().find(|&&j| core[j]) {
                label[i] = label[j];
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX {
            groups[l].push(i);
        }
    }
    let clusters = groups
        .into_iter()
        .filter(|g| g.len() >= config.min_points)
        .enumerate()
        .map(|(id, g)| {
            let k = g.len() as f64;
            let lat = g.iter().map(|&i| pts[i].geo.lat).sum::<f64>() / k;
            let lon = g.iter().map(|&i| pts[i].geo.lon).sum::<f64>() / k;
            Cluster {
                id,
                members: g.iter().map(|&i| pts[i].media_id.clone()).collect(),
                centroid: Geo::new(lat, lon),
                venue_category: None,
            }
        })
        .collect();
    Ok(clusters)
}

/// Sorted neighbor indices of every point, found with a latitude sweep.
fn neighbor_lists(pts: &[&GeoPoint], eps: f64) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut by_lat: Vec<usize> = (0..n).collect();
    by_lat.sort_by(|&a, &b| pts[a].geo.lat.total_cmp(&pts[b].geo.lat).then(a.cmp(&b)));
    // a degree of latitude is never shorter than this along a great circle
    let dlat = eps / M_PER_DEG_LAT * (1.0 + 1e-9);
    let mut out = vec![Vec::new(); n];
    for (pos, &i) in by_lat.iter().enumerate() {
        out[i].push(i);
        for &j in &by_lat[pos + 1..] {
            if pts[j].geo.lat - pts[i].geo.lat > dlat {
                break;
            }
            if haversine(pts[i].geo, pts[j].geo) <= eps {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    for nb in &mut out {
        nb.sort_unstable();
    }
    out
}

/// Maps a location to a venue type; `None` means the lookup failed.
pub trait Geocoder {
    fn lookup(&self, at: Geo) -> Option<VenueCategory>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeocoderRule {
    pub lat: f64,
    pub lon: f64,
    /// Meters.
    pub radius: f64,
    pub category: VenueCategory,
}

/// Ordered circular rules; the first rule containing the point wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubGeocoder {
    pub rules: Vec<GeocoderRule>,
}

impl StubGeocoder {
    pub fn new(rules: Vec<GeocoderRule>) -> Self {
        Self { rules }
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, GeoError> {
        let mut rules = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let err = |message: String| GeoError::Fixture { line: idx + 1, message };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            rules.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
        }
        Ok(Self { rules })
    }
}

impl Geocoder for StubGeocoder {
    fn lookup(&self, at: Geo) -> Option<VenueCategory> {
        self.rules
            .iter()
            .find(|r| haversine(Geo::new(r.lat, r.lon), at) <= r.radius)
            .map(|r| r.category)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VenueReport {
    pub clusters: u64,
    pub counts: BTreeMap<VenueCategory, u64>,
    /// Percent of clusters per category.
    pub shares: BTreeMap<VenueCategory, f64>,
    pub lookup_misses: u64,
}

/// Labels each cluster through `geocoder`; misses become `other`.
pub fn categorize_venues(clusters: &mut [Cluster], geocoder: &dyn Geocoder) -> VenueReport {
    let mut report = VenueReport::default();
    for c in clusters.iter_mut() {
        let cat = geocoder.lookup(c.centroid).unwrap_or_else(|| {
            report.lookup_misses += 1;
            VenueCategory::Other
        });
        c.venue_category = Some(cat);
        *report.counts.entry(cat).or_insert(0) += 1;
    }
    report.clusters = clusters.len() as u64;
    report.shares = report
        .counts
        .iter()
        .map(|(k, &v)| (*k, 100.0 * v as f64 / report.clusters as f64))
        .collect();
    report
}

/// Clusters as a GeoJSON feature collection of centroid points.
pub fn clusters_geojson(clusters: &[Cluster]) -> Value {
    let features: Vec<Value> = clusters
        .iter()
        .map(|c| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [c.centroid.lon, c.centroid.lat]},
                "properties": {
                    "id": c.id,
                    "size": c.members.len(),
                    "venue_category": c.venue_category,
                    "members": c.members,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    const LAX: Geo = Geo { lat: 33.740675, lon: -118.260497 };

    #[test]
    fn haversine_examples() {
        assert_eq!(haversine(LAX, LAX), 0.0);
        let anti = haversine(Geo::new(0.0, 0.0), Geo::new(0.0, 180.0));
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-6);
        assert!((anti - 20_015_086.8).abs() < 1.0);
        let north = haversine(LAX, Geo::new(LAX.lat + 0.045, LAX.lon));
        assert!((north - 5003.77).abs() < 0.1, "{north}");
        assert!(north > MAX_QUERY_RADIUS_M);
    }

    #[test]
    fn example_circle_normalizes_time_order() {
        let q = CircleQuery::from_params([1458220768.0, 1457615968.0, 5000.0, 33.740675, -118.260497]).unwrap();
        assert_eq!((q.min_time, q.max_time), (1457615968, 1458220768));
        assert_eq!(q.radius, 5000.0);
        assert!(CircleQuery::new(1, 1, 10.0, 0.0, 0.0).is_err());
        assert_eq!(CircleQuery::new(1, 2, 5000.1, 0.0, 0.0), Err(GeoError::Radius(5000.1)));
        assert_eq!(CircleQuery::new(1, 2, 0.0, 0.0, 0.0), Err(GeoError::Radius(0.0)));
        assert!(CircleQuery::new(1, 2, 10.0, 91.0, 0.0).is_err());
    }

    #[test]
    fn point_region_gets_one_circle() {
        let plan = plan_cover(BoundingBox::point(LAX), 5000.0, (10, 0)).unwrap();
        assert_eq!(plan.circles.len(), 1);
        assert_eq!(plan.circles[0].center(), LAX);
        assert_eq!(plan.estimated_requests, 1);
    }

    #[test]
    fn twenty_km_box_is_covered() {
        let region = BoundingBox::around(LAX, 20_000.0, 20_000.0);
        let plan = plan_cover(region, 5000.0, (0, 86_400 * 14)).unwrap();
        assert_eq!(plan.uncovered_samples(10_000, 7), 0);
        assert_eq!(plan.estimated_requests, plan.circles.len() as u64 * 2);
        // within a small factor of the ideal hexagon count
        let ideal = 400e6 / (1.5 * 3f64.sqrt() * 25e6);
        assert!((plan.circles.len() as f64) < ideal * 3.0, "{}", plan.circles.len());
    }

    #[test]
    fn cover_at_high_latitude_and_small_radius() {
        for (lat, r) in [(60.0, 500.0), (-45.0, 1200.0), (1.0, 3000.0)] {
            let region = BoundingBox::new(lat, 10.0, lat + 0.2, 10.4);
            let plan = plan_cover(region, r, (0, 100)).unwrap();
            assert_eq!(plan.uncovered_samples(10_000, 3), 0, "lat {lat} r {r}");
        }
    }

    #[test]
    fn plan_rejects_bad_input() {
        assert!(matches!(
            plan_cover(BoundingBox::new(30.0, 0.0, 36.0, 1.0), 5000.0, (0, 1)),
            Err(GeoError::RegionTooLarge(_))
        ));
        assert_eq!(
            plan_cover(BoundingBox::new(31.0, 0.0, 30.0, 1.0), 5000.0, (0, 1)),
            Err(GeoError::InvertedRegion)
        );
        assert!(plan_cover(BoundingBox::point(LAX), 6000.0, (0, 1)).is_err());
    }

    fn geo_post(id: &str, g: Geo, ts: i64) -> Post {
        Post {
            media_id: id.into(),
            user_id: "u".into(),
            username: "u".into(),
            created_at: ts,
            hashtags: vec![],
            caption: String::new(),
            geo: Some(g),
            media_ref: None,
        }
    }

    #[test]
    fn dedup_examples() {
        let a = geo_post("a", LAX, 5);
        let b = geo_post("b", LAX, 5);
        let (kept, r) = dedup(vec![vec![a.clone(), b.clone()], vec![a.clone()]]);
        assert_eq!(kept.len(), 2);
        assert_eq!(r.duplicates, 1);
        assert!((r.overlap_ratio - 1.0 / 3.0).abs() < 1e-12);
        let (same, r2) = dedup(vec![kept.clone()]);
        assert_eq!(same, kept);
        assert_eq!(r2.duplicates, 0);
        let (none, r3) = dedup(Vec::<Vec<Post>>::new());
        assert!(none.is_empty());
        assert_eq!(r3.overlap_ratio, 0.0);
    }

    #[test]
    fn overlapping_circles_return_duplicates_that_dedup_removes() {
        let region = BoundingBox::around(LAX, 15_000.0, 15_000.0);
        let plan = plan_cover(region, 3000.0, (0, 1000)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let posts: Vec<Post> = (0..500).map(|i| geo_post(&format!("p{i:03}"), region.sample(&mut rng), 500)).collect();
        let per_circle = fetch_circles(&plan, &posts);
        let (kept, report) = dedup(per_circle);
        assert_eq!(kept.len(), 500);
        assert!(report.duplicates > 0);
        let late = geo_post("late", LAX, 5000);
        assert!(fetch_circles(&plan, &[late]).iter().all(Vec::is_empty));
    }

    fn at(id: &str, g: Geo) -> GeoPoint {
        GeoPoint { media_id: id.into(), geo: g }
    }

    #[test]
    fn ten_posts_at_one_point() {
        let pts: Vec<_> = (0..10).map(|i| at(&format!("m{i}"), LAX)).collect();
        let c = cluster_hotspots(&pts, ClusterConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 10);
        assert!(haversine(c[0].centroid, LAX) < 1e-6);
    }

    #[test]
    fn spread_points_are_noise() {
        let pts: Vec<_> = (0..10).map(|i| at(&format!("m{i}"), Geo::new(LAX.lat + i as f64 * 0.01, LAX.lon))).collect();
        assert!(cluster_hotspots(&pts, ClusterConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn border_point_goes_to_smallest_core_neighbor() {
        let cfg = ClusterConfig { eps_m: 100.0, min_points: 4 };
        let east = |m: f64| Geo::new(LAX.lat, LAX.lon + m / (M_PER_DEG_LAT * LAX.lat.to_radians().cos()));
        // z reaches one core point of each group but is not core itself
        let mut pts = vec![at("a1", east(0.0)), at("a2", east(-50.0)), at("a3", east(-50.0)), at("a4", east(-50.0))];
        pts.extend([at("b1", east(180.0)), at("b2", east(230.0)), at("b3", east(230.0)), at("b4", east(230.0))]);
        pts.push(at("z", east(90.0)));
        let c = cluster_hotspots(&pts, cfg).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c[0].members.contains(&"z".to_string()));
        assert_eq!(c[1].members.len(), 4);
        let mut shuffled = pts.clone();
        shuffled.reverse();
        assert_eq!(cluster_hotspots(&shuffled, cfg).unwrap(), c);
    }

    #[test]
    fn planted_hotspots_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let region = BoundingBox::around(LAX, 40_000.0, 40_000.0);
        let centers = [
            Geo::new(LAX.lat + 0.05, LAX.lon - 0.08),
            Geo::new(LAX.lat - 0.06, LAX.lon + 0.02),
            Geo::new(LAX.lat + 0.01, LAX.lon + 0.1),
        ];
        let noise = Normal::new(0.0, 50.0).unwrap();
        let mut pts = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for i in 0..200 {
                let dy: f64 = noise.sample(&mut rng);
                let dx: f64 = noise.sample(&mut rng);
                let g = Geo::new(c.lat + dy / M_PER_DEG_LAT, c.lon + dx / (M_PER_DEG_LAT * c.lat.to_radians().cos()));
                pts.push(at(&format!("h{k}-{i:03}"), g));
            }
        }
        for i in 0..1000 {
            pts.push(at(&format!("n{i:04}"), region.sample(&mut rng)));
        }
        let clusters = cluster_hotspots(&pts, ClusterConfig::default()).unwrap();
        assert_eq!(clusters.len(), 3);
        for c in &centers {
            assert!(clusters.iter().any(|k| haversine(k.centroid, *c) < 150.0));
        }
    }

    #[test]
    fn venue_shares() {
        let clusters: Vec<Cluster> = (0..10)
            .map(|i| Cluster {
                id: i,
                members: vec![format!("m{i}")],
                centroid: Geo::new(10.0 + i as f64, 10.0),
                venue_category: None,
            })
            .collect();
        let rules: Vec<GeocoderRule> = (0..10)
            .map(|i| GeocoderRule {
                lat: 10.0 + i as f64,
                lon: 10.0,
                radius: 100.0,
                category: match i {
                    0..=5 => VenueCategory::Residential,
                    6 => VenueCategory::Club,
                    _ => VenueCategory::Restaurant,
                },
            })
            .collect();
        let mut labeled = clusters.clone();
        let r = categorize_venues(&mut labeled, &StubGeocoder::new(rules));
        assert_eq!(r.shares[&VenueCategory::Residential], 60.0);
        assert_eq!(r.shares[&VenueCategory::Club], 10.0);
        assert_eq!(r.shares[&VenueCategory::Restaurant], 30.0);
        assert_eq!(r.lookup_misses, 0);

        let mut missed = clusters.clone();
        let r = categorize_venues(&mut missed, &StubGeocoder::default());
        assert_eq!(r.shares[&VenueCategory::Other], 100.0);
        assert_eq!(r.lookup_misses, 10);
        assert_eq!(categorize_venues(&mut [], &StubGeocoder::default()), VenueReport::default());
    }

    #[test]
    fn first_matching_rule_wins() {
        let data = r#"{"lat":0,"lon":0,"radius":1000,"category":"club"}
{"lat":0,"lon":0,"radius":5000,"category":"residential"}
"#;
        let g = StubGeocoder::from_jsonl(data.as_bytes()).unwrap();
        assert_eq!(g.lookup(Geo::new(0.0, 0.0)), Some(VenueCategory::Club));
        assert_eq!(g.lookup(Geo::new(0.02, 0.0)), Some(VenueCategory::Residential));
        assert_eq!(g.lookup(Geo::new(1.0, 0.0)), None);
    }

    #[test]
    fn geojson_shape() {
        let c = Cluster {
            id: 0,
            members: vec!["a".into()],
            centroid: LAX,
            venue_category: Some(VenueCategory::Club),
        };
        let v = clusters_geojson(&[c]);
        assert_eq!(v["type"], "FeatureCollection");
        assert_eq!(v["features"][0]["geometry"]["coordinates"][0], LAX.lon);
        assert_eq!(v["features"][0]["properties"]["venue_category"], "club");
    }
}
