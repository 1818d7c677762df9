//! Pearson correlation of each meteorological feature against PV output,
//! and threshold-based selection of model inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Column, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("column `{0}` has missing values; clean the dataset first")]
    MissingValues(Column),
    #[error("`{0}` is not a candidate feature")]
    NotAFeature(Column),
    #[error("`{0}` is both force-included and force-excluded")]
    ConflictingPolicy(Column),
    #[error("selection policy leaves no features")]
    EmptySelection,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sample Pearson correlation, `1/(T-1) Σ z_a z_b` with `T-1` standard
/// deviations, clamped to `[-1, 1]`.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(FeatureError::TooFewSamples(a.len()));
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    // relative to the mean magnitude
    let flat = |s: f64, m: f64| !(s > 1e-13 * m.abs().max(f64::MIN_POSITIVE));
    if flat(sa, ma) || flat(sb, mb) {
        return Err(FeatureError::ZeroVariance);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| ((x - ma) / sa) * ((y - mb) / sb)).sum();
    Ok((sum / (a.len() as f64 - 1.0)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `None` marks a feature with zero variance (correlation undefined).
    pub entries: BTreeMap<Column, Option<f64>>,
    pub sample_count: usize,
}

impl CorrelationReport {
    /// Builds a report from known coefficients, e.g. published values.
    pub fn from_values(values: &[(Column, f64)], sample_count: usize) -> Self {
        CorrelationReport { entries: values.iter().map(|&(c, r)| (c, Some(r))).collect(), sample_count }
    }

    pub fn get(&self, feature: Column) -> Option<f64> {
        self.entries.get(&feature).copied().flatten()
    }

    /// Two-column `feature,rho` table; undefined entries leave `rho` empty.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "rho"])?;
        for (feature, rho) in &self.entries {
            w.write_record([feature.name().to_string(), rho.map(|r| r.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Correlates every candidate feature with `power_mw` over the whole dataset.
pub fn correlation_report(d: &Dataset) -> Result<CorrelationReport, FeatureError> {
    if d.len() < 2 {
        return Err(FeatureError::TooFewSamples(d.len()));
    }
    let power = d.column(Column::PowerMw).ok_or(FeatureError::MissingValues(Column::PowerMw))?;
    let mut entries = BTreeMap::new();
    for feature in Column::FEATURES {
        let values = d.column(feature).ok_or(FeatureError::MissingValues(feature))?;
        let rho = match pearson(&values, &power) {
            Ok(r) => Some(r),
            Err(FeatureError::ZeroVariance) => {
                log::warn!("`{feature}` or power has zero variance; correlation undefined");
                None
            }
            Err(e) => return Err(e),
        };
        entries.insert(feature, rho);
    }
    Ok(CorrelationReport { entries, sample_count: d.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    pub threshold: f64,
    pub force_include: Vec<Column>,
    pub force_exclude: Vec<Column>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy { threshold: 0.10, force_include: vec![Column::CloudOkta], force_exclude: vec![Column::Albedo] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Selected features in canonical column order.
    pub selected: Vec<Column>,
    pub policy: SelectionPolicy,
}

/// `{f : |ρ_f| ≥ threshold} ∪ force_include ∖ force_exclude`.
pub fn select_features(report: &CorrelationReport, policy: &SelectionPolicy) -> Result<FeatureSelection, FeatureError> {
    for &c in policy.force_include.iter().chain(&policy.force_exclude) {
        if !c.is_feature() {
            return Err(FeatureError::NotAFeature(c));
        }
    }
    if let Some(&c) = policy.force_include.iter().find(|c| policy.force_exclude.contains(c)) {
        return Err(FeatureError::ConflictingPolicy(c));
    }
    let mut chosen: BTreeSet<Column> =
        Column::FEATURES.into_iter().filter(|&f| report.get(f).is_some_and(|r| r.abs() >= policy.threshold)).collect();
    chosen.extend(policy.force_include.iter().copied());
    for c in &policy.force_exclude {
        chosen.remove(c);
    }
    if chosen.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    Ok(FeatureSelection { selected: chosen.into_iter().collect(), policy: policy.clone() })
}
