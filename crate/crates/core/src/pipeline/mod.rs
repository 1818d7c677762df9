//! End-to-end orchestration: validate, train, predict, evaluate and the
//! cluster-count sensitivity study. Every command reads a [`PipelineConfig`]
//! or a run manifest and writes JSON and CSV files into an output directory.

mod commands;
mod config;
mod manifest;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::clustering::ClusterError;
use crate::data::DataError;
use crate::evaluation::EvalError;
use crate::features::FeatureError;
use crate::gpr::GprError;

pub use commands::{
    cmd_evaluate, cmd_predict, cmd_repeat, cmd_sensitivity, cmd_train, cmd_validate, forecast, ClusterEvaluation,
    EvaluationReport, ForecastRow, IntervalReport, RepeatReport, RepeatRow, SensitivityRow,
};
pub use config::{CvConfig, DataSource, HoldoutConfig, PercentBase, PipelineConfig};
pub use manifest::{ClusterArtifact, ClusterSummary, RunManifest, Timings, TrainedRun, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("load: {0}")]
    Load(#[source] DataError),
    #[error("clean: {0}")]
    Clean(#[source] DataError),
    #[error("split: {0}")]
    Split(#[source] DataError),
    #[error("clustering: {0}")]
    Clustering(#[from] ClusterError),
    #[error("feature selection: {0}")]
    Features(#[from] FeatureError),
    #[error("cluster {cluster}: need at least {needed} training points, got {got}")]
    TooFewPoints { cluster: u32, needed: usize, got: usize },
    #[error("fit: cluster {cluster}: {source}")]
    Fit {
        cluster: u32,
        #[source]
        source: GprError,
    },
    #[error("cross-validation: cluster {cluster}: {source}")]
    CrossValidation {
        cluster: u32,
        #[source]
        source: EvalError,
    },
    #[error("predict: {0}")]
    Predict(#[source] GprError),
    #[error("evaluate: {0}")]
    Evaluate(#[from] EvalError),
    #[error("artifact {path}: {reason}")]
    ArtifactCorrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_owned(), source }
}

pub(crate) fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> PipelineError + '_ {
    move |source| PipelineError::Csv { path: path.to_owned(), source }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| PipelineError::Json { path: path.to_owned(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: path.to_owned(), source })
}
