//! k-means grouping of hourly records on (hour-of-day, power).
//!
//! Both coordinates are min-max scaled to `[0, 1]` before any distance is
//! taken. Lloyd's algorithm minimizes the ordinary within-cluster sum of
//! squares (`inertia_standard`); the size-weighted sum
//! `Σ_k N_k Σ_{C(i)=k} d²` is reported alongside as `inertia_weighted` but is
//! not what the iterations descend.
//!
//! Power is unknown when forecasting, so [`ClusterModel::assign_forecast`]
//! routes a query hour by time alone: it returns the most common training
//! cluster among records with the same hour-of-day whose day-of-year lies
//! within ±15 days (circularly) of the query.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-width, in days, of the seasonal window used by `assign_forecast`.
pub const SEASON_WINDOW_DAYS: u32 = 15;
const DAYS_IN_TABLE: usize = 366;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("data has {distinct} distinct points, cannot form {k} clusters")]
    DegenerateData { distinct: usize, k: usize },
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("point {0} has a non-finite coordinate")]
    NonFinitePoint(usize),
    #[error("calendar has {got} entries for {expected} training points")]
    CalendarMismatch { expected: usize, got: usize },
}

/// 1-based cluster label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl ClusterId {
    pub fn from_index(index: usize) -> Self {
        ClusterId(index as u32 + 1)
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 4, max_iter: 300, n_restarts: 10, seed: 0, tol: 1e-10 }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k < 1 {
            return Err(ClusterError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_iter < 1 {
            return Err(ClusterError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.n_restarts < 1 {
            return Err(ClusterError::InvalidConfig("n_restarts must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ClusterError::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Min-max range of one raw coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub min: f64,
    pub max: f64,
}

impl NormRange {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        NormRange { min, max }
    }

    /// Constant coordinates map to 0.
    pub fn scale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            v - self.min
        }
    }

    pub fn unscale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            self.min + v * span
        } else {
            self.min + v
        }
    }
}

/// Modal cluster per (hour-of-day, day-of-year) over a circular seasonal
/// window, with a per-hour fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourClusterTable {
    pub window_days: u32,
    /// `by_day[hour][day_of_year - 1]`; `None` where the window is empty.
    pub by_day: Vec<Vec<Option<ClusterId>>>,
    /// Modal cluster per hour over the whole year.
    pub by_hour: Vec<Option<ClusterId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub config: ClusterConfig,
    /// Centroids in normalized (hour, power) space.
    pub centroids: Vec<[f64; 2]>,
    pub norm_params: [NormRange; 2],
    #[serde(skip)]
    pub assignments: Vec<ClusterId>,
    pub cluster_sizes: Vec<usize>,
    pub inertia_standard: f64,
    pub inertia_weighted: f64,
    pub hour_cluster_table: Option<HourClusterTable>,
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Standard and size-weighted within-cluster sums of squares for a labelling.
pub(crate) fn inertias(points: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> (f64, f64) {
    let k = centroids.len();
    let mut sse = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sse[l] += dist2(p, &centroids[l]);
        counts[l] += 1;
    }
    let standard = sse.iter().sum();
    let weighted = sse.iter().zip(&counts).map(|(s, &n)| s * n as f64).sum();
    (standard, weighted)
}

fn kmeans_plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Result of one Lloyd run from fixed initial centroids.
#[derive(Debug, Clone)]
pub(crate) struct LloydRun {
    pub centroids: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    /// `inertia_standard` after every update step.
    pub history: Vec<f64>,
}

pub(crate) fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>, max_iter: usize, tol: f64) -> LloydRun {
    let k = centroids.len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut settling = false;
    for _ in 0..max_iter {
        let mut changed = false;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let (best, _) = nearest(p, &centroids);
            if best != *l {
                *l = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = vec![[0.0, 0.0]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        // An empty cluster takes the point farthest from its own centroid,
        // drawn from a cluster that can spare it.
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, dist2(&points[i], &centroids[labels[i]])))
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = donor {
                let from = labels[i];
                sums[from][0] -= points[i][0];
                sums[from][1] -= points[i][1];
                counts[from] -= 1;
                labels[i] = empty;
                sums[empty] = points[i];
                counts[empty] = 1;
            }
        }

        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            shift = shift.max(dist2(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        history.push(inertias(points, &labels, &centroids).0);
        // One extra assignment pass after the centroids settle.
        if shift < tol {
            if settling {
                break;
            }
            settling = true;
        } else {
            settling = false;
        }
    }
    LloydRun { centroids, labels, history }
}

/// Fits k-means on raw (hour-of-day, power) points.
pub fn fit_kmeans(points: &[[f64; 2]], cfg: &ClusterConfig) -> Result<ClusterModel, ClusterError> {
    cfg.validate()?;
    if points.len() < cfg.k {
        return Err(ClusterError::TooFewPoints { needed: cfg.k, got: points.len() });
    }
    if let Some(i) = points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(ClusterError::NonFinitePoint(i));
    }
    let norm_params = [NormRange::of(points.iter().map(|p| p[0])), NormRange::of(points.iter().map(|p| p[1]))];
    let scaled: Vec<[f64; 2]> =
        points.iter().map(|p| [norm_params[0].scale(p[0]), norm_params[1].scale(p[1])]).collect();

    let mut distinct = scaled.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < cfg.k {
        return Err(ClusterError::DegenerateData { distinct: distinct.len(), k: cfg.k });
    }

    let mut best: Option<(f64, LloydRun)> = None;
    for restart in 0..cfg.n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let init = kmeans_plus_plus(&scaled, cfg.k, &mut rng);
        let run = lloyd(&scaled, init, cfg.max_iter, cfg.tol);
        let (sse, _) = inertias(&scaled, &run.labels, &run.centroids);
        log::debug!("restart {restart}: {} updates, inertia {sse:.6}", run.history.len());
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, run));
        }
    }
    let (_, run) = best.expect("n_restarts >= 1");
    let (inertia_standard, inertia_weighted) = inertias(&scaled, &run.labels, &run.centroids);
    let mut cluster_sizes = vec![0; cfg.k];
    for &l in &run.labels {
        cluster_sizes[l] += 1;
    }
    Ok(ClusterModel {
        config: *cfg,
        centroids: run.centroids,
        norm_params,
        assignments: run.labels.into_iter().map(ClusterId::from_index).collect(),
        cluster_sizes,
        inertia_standard,
        inertia_weighted,
        hour_cluster_table: None,
    })
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn normalize(&self, point: [f64; 2]) -> [f64; 2] {
        [self.norm_params[0].scale(point[0]), self.norm_params[1].scale(point[1])]
    }

    /// Nearest centroid to a raw (hour, power) point.
    pub fn assign(&self, point: [f64; 2]) -> ClusterId {
        self.assign_normalized(self.normalize(point))
    }

    pub fn assign_normalized(&self, point: [f64; 2]) -> ClusterId {
        ClusterId::from_index(nearest(&point, &self.centroids).0)
    }

    /// `(inertia_standard, inertia_weighted)` of raw points under nearest-centroid
    /// assignment.
    pub fn objective(&self, points: &[[f64; 2]]) -> (f64, f64) {
        let scaled: Vec<[f64; 2]> = points.iter().map(|&p| self.normalize(p)).collect();
        let labels: Vec<usize> = scaled.iter().map(|p| nearest(p, &self.centroids).0).collect();
        inertias(&scaled, &labels, &self.centroids)
    }

    /// Builds the forecast-time routing table from the training records'
    /// `(hour, day_of_year)` pairs, in the same order as `assignments`.
    pub fn build_hour_table(&mut self, calendar: &[(u32, u32)]) -> Result<(), ClusterError> {
        if calendar.len() != self.assignments.len() {
            return Err(ClusterError::CalendarMismatch { expected: self.assignments.len(), got: calendar.len() });
        }
        let k = self.k();
        let mut counts = vec![vec![vec![0u32; k]; DAYS_IN_TABLE]; 24];
        for (&(hour, doy), id) in calendar.iter().zip(&self.assignments) {
            let day = (doy.clamp(1, DAYS_IN_TABLE as u32) - 1) as usize;
            counts[hour as usize % 24][day][id.index()] += 1;
        }
        let window = SEASON_WINDOW_DAYS as i64;
        let mut by_day = Vec::with_capacity(24);
        let mut by_hour = Vec::with_capacity(24);
        for hour_counts in &counts {
            let mut total = vec![0u32; k];
            for day in hour_counts {
                total.iter_mut().zip(day).for_each(|(t, c)| *t += c);
            }
            by_hour.push(modal(&total));
            let row = (0..DAYS_IN_TABLE as i64)
                .map(|d| {
                    let mut acc = vec![0u32; k];
                    for off in -window..=window {
                        let day = (d + off).rem_euclid(DAYS_IN_TABLE as i64) as usize;
                        acc.iter_mut().zip(&hour_counts[day]).for_each(|(a, c)| *a += c);
                    }
                    modal(&acc)
                })
                .collect();
            by_day.push(row);
        }
        self.hour_cluster_table = Some(HourClusterTable { window_days: SEASON_WINDOW_DAYS, by_day, by_hour });
        Ok(())
    }

    /// Cluster for a forecast hour whose power is unknown. Falls back to the
    /// hour's year-round mode when the seasonal window holds no training
    /// records, and to the centroid nearest in hour when the hour never
    /// occurs in training.
    pub fn assign_forecast(&self, hour: u32, day_of_year: u32) -> ClusterId {
        let table = self.hour_cluster_table.as_ref();
        let h = hour as usize % 24;
        let day = (day_of_year.clamp(1, DAYS_IN_TABLE as u32) - 1) as usize;
        table.and_then(|t| t.by_day[h][day].or(t.by_hour[h])).unwrap_or_else(|| {
            let x = self.norm_params[0].scale(hour as f64);
            let idx = self
                .centroids
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, c)| {
                    let d = (c[0] - x).abs();
                    if d < best.1 {
                        (i, d)
                    } else {
                        best
                    }
                })
                .0;
            ClusterId::from_index(idx)
        })
    }
}

fn modal(counts: &[u32]) -> Option<ClusterId> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|(_, b)| c > b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| ClusterId::from_index(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
    }

    fn cfg(k: usize, restarts: usize) -> ClusterConfig {
        ClusterConfig { k, n_restarts: restarts, ..ClusterConfig::default() }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![[0.0, 0.0], [2.0, 0.0], [0.0, 4.0], [2.0, 4.0], [1.0, 2.0]];
        let m = fit_kmeans(&pts, &cfg(1, 3)).unwrap();
        // normalized coordinates: x/2, y/4
        assert!((m.centroids[0][0] - 0.5).abs() < 1e-12);
        assert!((m.centroids[0][1] - 0.5).abs() < 1e-12);
        let sse: f64 = pts.iter().map(|&p| dist2(&m.normalize(p), &[0.5, 0.5])).sum();
        assert!((m.inertia_standard - sse).abs() < 1e-12);
        assert!((m.inertia_weighted - 5.0 * sse).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts = vec![[0.0, 1.0], [3.0, 2.0], [5.0, 0.5], [7.0, 9.0]];
        let m = fit_kmeans(&pts, &cfg(4, 10)).unwrap();
        assert_eq!(m.inertia_standard, 0.0);
        assert_eq!(m.cluster_sizes, vec![1, 1, 1, 1]);
    }

    #[test]
    fn too_few_and_degenerate() {
        assert_eq!(fit_kmeans(&square(), &cfg(5, 1)).unwrap_err(), ClusterError::TooFewPoints { needed: 5, got: 4 });
        let same = vec![[1.0, 1.0]; 6];
        assert!(matches!(fit_kmeans(&same, &cfg(2, 1)), Err(ClusterError::DegenerateData { distinct: 1, k: 2 })));
        assert!(fit_kmeans(&same, &cfg(1, 1)).is_ok());
    }

    #[test]
    fn bad_config() {
        let mut c = cfg(2, 1);
        c.tol = 0.0;
        assert!(matches!(fit_kmeans(&square(), &c), Err(ClusterError::InvalidConfig(_))));
    }

    #[test]
    fn assign_ties_break_low() {
        let m = fit_kmeans(&square(), &cfg(2, 20)).unwrap();
        let mid = [(m.centroids[0][0] + m.centroids[1][0]) / 2.0, (m.centroids[0][1] + m.centroids[1][1]) / 2.0];
        assert_eq!(m.assign_normalized(mid), ClusterId(1));
        assert_eq!(m.assign_normalized(m.centroids[1]), ClusterId(2));
    }

    #[test]
    fn objective_weights_by_cluster_size() {
        // one cluster of two points, each at distance 1 from the centroid
        let scaled = vec![[0.0, 0.0], [2.0, 0.0]];
        let (s, p) = inertias(&scaled, &[0, 0], &[[1.0, 0.0]]);
        assert_eq!((s, p), (2.0, 4.0));
        let (s, p) = inertias(&scaled, &[0, 1], &scaled);
        assert_eq!((s, p), (0.0, 0.0));
    }

    #[test]
    fn seeding_is_deterministic() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [(i % 24) as f64, ((i * 7) % 13) as f64]).collect();
        let a = fit_kmeans(&pts, &cfg(3, 5)).unwrap();
        let b = fit_kmeans(&pts, &cfg(3, 5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn forecast_routing_uses_window_then_hour() {
        // hour 12: cluster by season; hour 0 only ever seen in cluster of low points
        let mut pts = Vec::new();
        let mut cal = Vec::new();
        for doy in 1..=365u32 {
            let summer = (120..=240).contains(&doy);
            pts.push([12.0, if summer { 10.0 } else { 5.0 }]);
            cal.push((12, doy));
            pts.push([0.0, 0.0]);
            cal.push((0, doy));
        }
        // no hour-1 records in the first half of the year
        for doy in 200..=365u32 {
            pts.push([1.0, 0.0]);
            cal.push((1, doy));
        }
        let mut m = fit_kmeans(&pts, &cfg(3, 10)).unwrap();
        m.build_hour_table(&cal).unwrap();
        let summer = m.assign([12.0, 10.0]);
        let winter = m.assign([12.0, 5.0]);
        assert_ne!(summer, winter);
        assert_eq!(m.assign_forecast(12, 180), summer);
        assert_eq!(m.assign_forecast(12, 10), winter);
        assert_eq!(m.assign_forecast(0, 50), m.assign([0.0, 0.0]));
        // empty window for hour 1 near day 60: falls back to the hour's global mode
        assert_eq!(m.assign_forecast(1, 60), m.assign([1.0, 0.0]));
    }

    #[test]
    fn calendar_length_checked() {
        let mut m = fit_kmeans(&square(), &cfg(2, 2)).unwrap();
        assert!(matches!(m.build_hour_table(&[(0, 1)]), Err(ClusterError::CalendarMismatch { .. })));
    }

    #[test]
    fn model_json_omits_assignments() {
        let m = fit_kmeans(&square(), &cfg(2, 2)).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert!(v.get("assignments").is_none());
        for key in ["centroids", "norm_params", "hour_cluster_table", "inertia_standard", "inertia_weighted", "config"]
        {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn lloyd_inertia_never_increases() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> = (0..60).map(|_| [rng.random(), rng.random()]).collect();
            // deliberately poor start: all centroids in one corner
            let init = vec![[0.0, 0.0], [0.01, 0.0], [0.0, 0.01], [0.01, 0.01]];
            let run = lloyd(&pts, init, 100, 1e-12);
            assert!(!run.history.is_empty());
            for w in run.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", run.history);
            }
            let relabelled: Vec<usize> = pts.iter().map(|p| nearest(p, &run.centroids).0).collect();
            assert_eq!(relabelled, run.labels);
        }
    }
}
