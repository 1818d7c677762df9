use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_json, PipelineError};
use crate::clustering::ClusterConfig;
use crate::data::{CleanPolicy, ColumnMapping, SiteMeta};
use crate::evaluation::z_star;
use crate::features::SelectionPolicy;
use crate::gpr::GprOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldoutConfig {
    pub n_days: usize,
    pub seed: u64,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig { n_days: 30, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 5, seed: 0 }
    }
}

/// Denominator of the percent metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PercentBase {
    /// Site nameplate capacity.
    #[default]
    Capacity,
    /// Largest output in the training partition.
    MaxObserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub site: SiteMeta,
    #[serde(default)]
    pub clean: CleanPolicy,
    #[serde(default)]
    pub holdout: HoldoutConfig,
    #[serde(default)]
    pub clustering: ClusterConfig,
    #[serde(default)]
    pub features: SelectionPolicy,
    #[serde(default)]
    pub gpr: GprOptions,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default = "default_ci_levels")]
    pub ci_levels: Vec<f64>,
    #[serde(default)]
    pub percent_base: PercentBase,
    /// Train/evaluate repetitions with distinct hold-out seeds for `repeat`.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_ci_levels() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}

fn default_repeats() -> usize {
    30
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn new(data_path: impl Into<PathBuf>, site: SiteMeta, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            data: DataSource { path: data_path.into(), columns: ColumnMapping::default() },
            site,
            clean: CleanPolicy::default(),
            holdout: HoldoutConfig::default(),
            clustering: ClusterConfig::default(),
            features: SelectionPolicy::default(),
            gpr: GprOptions::default(),
            cv: CvConfig::default(),
            ci_levels: default_ci_levels(),
            percent_base: PercentBase::default(),
            repeats: default_repeats(),
            output_dir: output_dir.into(),
        }
    }

    /// Reads a JSON config. Relative data and output paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_owned(), source })?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: path.to_owned(), source })?;
        let dir = path.parent().unwrap_or(Path::new(""));
        if cfg.data.path.is_relative() {
            cfg.data.path = dir.join(&cfg.data.path);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Writes the config as pretty JSON.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.site.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.clustering.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if let CleanPolicy::Interpolate { max_gap_hours } = self.clean {
            if max_gap_hours < 1 {
                return bad("clean.max_gap_hours must be at least 1".into());
            }
        }
        if self.holdout.n_days == 0 {
            return bad("holdout.n_days must be at least 1".into());
        }
        if self.cv.k < 2 {
            return bad(format!("cv.k must be at least 2, got {}", self.cv.k));
        }
        if self.gpr.n_starts == 0 || self.gpr.max_evals == 0 {
            return bad("gpr.n_starts and gpr.max_evals must be positive".into());
        }
        if !(self.features.threshold >= 0.0 && self.features.threshold <= 1.0) {
            return bad(format!("features.threshold {} outside [0, 1]", self.features.threshold));
        }
        for &level in &self.ci_levels {
            z_star(level).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
