//! Hourly solar datasets: the record model, CSV ingestion, validation,
//! cleaning and hold-out partitioning.
//!
//! Timestamps are local standard time of the site, with no DST shifts, at
//! whole-hour resolution.

mod clean;
mod csv_io;
mod split;
mod validate;

use std::fmt;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{clean, CleanPolicy};
pub use csv_io::{load_csv, load_horizon_csv, write_csv, ColumnMapping, HorizonRow};
pub use split::{split_holdout, HoldoutSplit};
pub use validate::{validate_dataset, Gap, MissingCell, RangeViolation, ValidationReport};

/// Timestamp layout used in every CSV this crate reads or writes.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Relative slack allowed on `power_mw <= capacity_mw`.
pub const CAPACITY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("schema mismatch: column `{column}` (for `{logical}`) not in header")]
    SchemaMismatch { logical: String, column: String },
    #[error("dataset has no valid rows")]
    EmptyDataset,
    #[error("cleaning dropped every row")]
    AllRowsDropped,
    #[error("dataset spans {available} calendar days, need more than {requested}")]
    InsufficientDays { requested: usize, available: usize },
    #[error("invalid site metadata: {0}")]
    InvalidSite(String),
    #[error("invalid clean policy: {0}")]
    InvalidPolicy(String),
    #[error("row {row}: missing value for `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The numeric columns of a record, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Dni,
    Dhi,
    Ghi,
    TemperatureC,
    ZenithDeg,
    AzimuthDeg,
    CloudOkta,
    Albedo,
    PowerMw,
}

impl Column {
    pub const ALL: [Column; 9] = [
        Column::Dni,
        Column::Dhi,
        Column::Ghi,
        Column::TemperatureC,
        Column::ZenithDeg,
        Column::AzimuthDeg,
        Column::CloudOkta,
        Column::Albedo,
        Column::PowerMw,
    ];

    /// The eight meteorological candidates for model inputs.
    pub const FEATURES: [Column; 8] = [
        Column::Dni,
        Column::Dhi,
        Column::Ghi,
        Column::TemperatureC,
        Column::ZenithDeg,
        Column::AzimuthDeg,
        Column::CloudOkta,
        Column::Albedo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Dni => "dni",
            Column::Dhi => "dhi",
            Column::Ghi => "ghi",
            Column::TemperatureC => "temperature_c",
            Column::ZenithDeg => "zenith_deg",
            Column::AzimuthDeg => "azimuth_deg",
            Column::CloudOkta => "cloud_okta",
            Column::Albedo => "albedo",
            Column::PowerMw => "power_mw",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn is_feature(self) -> bool {
        self != Column::PowerMw
    }

    /// Whether `value` satisfies the column's range invariant. Power is
    /// checked against capacity separately.
    pub fn in_range(self, value: f64, capacity_mw: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            Column::Dni | Column::Dhi | Column::Ghi => value >= 0.0,
            Column::TemperatureC | Column::Albedo => true,
            Column::ZenithDeg => (0.0..=180.0).contains(&value),
            Column::AzimuthDeg => (0.0..360.0).contains(&value),
            Column::CloudOkta => value.fract() == 0.0 && (0.0..=9.0).contains(&value),
            Column::PowerMw => value >= 0.0 && value <= capacity_mw * (1.0 + CAPACITY_TOLERANCE),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub name: String,
    pub capacity_mw: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl SiteMeta {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.capacity_mw > 0.0) {
            return Err(DataError::InvalidSite(format!("capacity_mw must be positive, got {}", self.capacity_mw)));
        }
        if !(self.latitude_deg.abs() <= 90.0) {
            return Err(DataError::InvalidSite(format!("latitude_deg out of range: {}", self.latitude_deg)));
        }
        if !(self.longitude_deg.abs() <= 180.0) {
            return Err(DataError::InvalidSite(format!("longitude_deg out of range: {}", self.longitude_deg)));
        }
        Ok(())
    }
}

/// One hour of observations. `None` marks a missing or unparseable cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub timestamp: NaiveDateTime,
    pub dni: Option<f64>,
    pub dhi: Option<f64>,
    pub ghi: Option<f64>,
    pub temperature_c: Option<f64>,
    pub zenith_deg: Option<f64>,
    pub azimuth_deg: Option<f64>,
    pub cloud_okta: Option<f64>,
    pub albedo: Option<f64>,
    pub power_mw: Option<f64>,
}

impl SampleRecord {
    pub fn empty(timestamp: NaiveDateTime) -> Self {
        SampleRecord {
            timestamp,
            dni: None,
            dhi: None,
            ghi: None,
            temperature_c: None,
            zenith_deg: None,
            azimuth_deg: None,
            cloud_okta: None,
            albedo: None,
            power_mw: None,
        }
    }

    pub fn get(&self, column: Column) -> Option<f64> {
        match column {
            Column::Dni => self.dni,
            Column::Dhi => self.dhi,
            Column::Ghi => self.ghi,
            Column::TemperatureC => self.temperature_c,
            Column::ZenithDeg => self.zenith_deg,
            Column::AzimuthDeg => self.azimuth_deg,
            Column::CloudOkta => self.cloud_okta,
            Column::Albedo => self.albedo,
            Column::PowerMw => self.power_mw,
        }
    }

    pub fn set(&mut self, column: Column, value: Option<f64>) {
        let slot = match column {
            Column::Dni => &mut self.dni,
            Column::Dhi => &mut self.dhi,
            Column::Ghi => &mut self.ghi,
            Column::TemperatureC => &mut self.temperature_c,
            Column::ZenithDeg => &mut self.zenith_deg,
            Column::AzimuthDeg => &mut self.azimuth_deg,
            Column::CloudOkta => &mut self.cloud_okta,
            Column::Albedo => &mut self.albedo,
            Column::PowerMw => &mut self.power_mw,
        };
        *slot = value;
    }

    pub fn hour(&self) -> u32 {
        self.timestamp.hour()
    }

    pub fn day_of_year(&self) -> u32 {
        self.timestamp.ordinal()
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    /// Whether every cell is present and within range.
    pub fn is_valid(&self, capacity_mw: f64) -> bool {
        Column::ALL.iter().all(|&c| matches!(self.get(c), Some(v) if c.in_range(v, capacity_mw)))
    }
}

/// Hourly records for one site, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub site: SiteMeta,
    records: Vec<SampleRecord>,
}

impl Dataset {
    /// Builds a dataset, sorting by timestamp and keeping the first record
    /// of any duplicated hour.
    pub fn new(site: SiteMeta, mut records: Vec<SampleRecord>) -> Self {
        records.sort_by_key(|r| r.timestamp);
        let before = records.len();
        records.dedup_by_key(|r| r.timestamp);
        if records.len() != before {
            log::warn!("dropped {} records with duplicated timestamps", before - records.len());
        }
        Dataset { site, records }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct calendar days in ascending order.
    pub fn days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = self.records.iter().map(|r| r.date()).collect();
        days.dedup();
        days
    }

    /// Values of one column; `None` if any cell is missing.
    pub fn column(&self, column: Column) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.get(column)).collect()
    }

    pub fn filter<F: Fn(&SampleRecord) -> bool>(&self, keep: F) -> Dataset {
        Dataset { site: self.site.clone(), records: self.records.iter().filter(|r| keep(r)).cloned().collect() }
    }

    /// SHA-256 over the canonical CSV serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        csv_io::write_records(&mut buf, &self.records, &ColumnMapping::default())
            .expect("writing to memory cannot fail");
        hasher.update(&buf);
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub(crate) fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    let ts = ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())?;
    (ts.minute() == 0 && ts.second() == 0).then_some(ts)
}
