use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{read_json, PipelineConfig, PipelineError};
use crate::clustering::{ClusterId, ClusterModel};
use crate::data::Column;
use crate::evaluation::MetricSet;
use crate::gpr::{GprArtifact, KernelHyperparams, TrainedGpr};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One cluster's model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub cluster: ClusterId,
    /// Input columns, in the order the model expects them.
    pub features: Vec<Column>,
    pub model: GprArtifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: ClusterId,
    pub n_points: usize,
    /// Relative to the manifest's directory.
    pub model_path: PathBuf,
    pub hyperparams: KernelHyperparams,
    pub beta: f64,
    pub log_likelihood: f64,
    pub fold_sizes: Vec<usize>,
    pub cv_mean: MetricSet,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_s: f64,
    pub clustering_s: f64,
    pub features_s: f64,
    pub fit_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub created_unix_s: u64,
    pub config: PipelineConfig,
    /// Content hash of the dataset as loaded, before cleaning.
    pub data_fingerprint: String,
    pub train_fingerprint: String,
    pub holdout_fingerprint: String,
    pub train_records: usize,
    pub holdout_records: usize,
    pub train_days: Vec<NaiveDate>,
    pub holdout_days: Vec<NaiveDate>,
    /// Denominator of every percent metric.
    pub base_mw: f64,
    pub features: Vec<Column>,
    pub cluster_model_path: PathBuf,
    pub holdout_path: PathBuf,
    pub correlation_path: PathBuf,
    pub cv_path: PathBuf,
    pub clusters: Vec<ClusterSummary>,
    /// Metrics over the pooled out-of-fold predictions of all clusters.
    pub cv_pooled: MetricSet,
    pub timings: Timings,
}

/// A trained run loaded back from disk with every model verified.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub cluster_model: ClusterModel,
    pub models: BTreeMap<ClusterId, TrainedGpr>,
}

impl TrainedRun {
    pub fn load(manifest_path: &Path) -> Result<Self, PipelineError> {
        let manifest: RunManifest = read_json(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
        let cluster_model: ClusterModel = read_json(&dir.join(&manifest.cluster_model_path))?;
        let corrupt = |path: &Path, reason: String| PipelineError::ArtifactCorrupt { path: path.to_owned(), reason };
        let path = dir.join(&manifest.cluster_model_path);
        if cluster_model.k() != manifest.clusters.len() || cluster_model.hour_cluster_table.is_none() {
            return Err(corrupt(&path, "cluster model does not match the manifest".into()));
        }
        let mut models = BTreeMap::new();
        for summary in &manifest.clusters {
            let path = dir.join(&summary.model_path);
            let artifact: ClusterArtifact = read_json(&path)?;
            if artifact.cluster != summary.cluster || artifact.features != manifest.features {
                return Err(corrupt(&path, "cluster id or feature list does not match the manifest".into()));
            }
            if artifact.model.hp != summary.hyperparams || artifact.model.beta != summary.beta {
                return Err(corrupt(&path, "hyperparameters do not match the manifest".into()));
            }
            let model = TrainedGpr::from_artifact(artifact.model).map_err(|e| corrupt(&path, e.to_string()))?;
            if model.n_inputs != manifest.features.len() {
                return Err(corrupt(&path, "input width does not match the feature list".into()));
            }
            models.insert(summary.cluster, model);
        }
        Ok(TrainedRun { dir, manifest, cluster_model, models })
    }
}
