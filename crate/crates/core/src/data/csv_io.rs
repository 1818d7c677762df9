use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{format_timestamp, parse_timestamp, Column, DataError, Dataset, SampleRecord, SiteMeta};

/// Maps each logical column to the header name used in a particular CSV
/// export. Defaults to the logical names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub timestamp: String,
    pub dni: String,
    pub dhi: String,
    pub ghi: String,
    pub temperature_c: String,
    pub zenith_deg: String,
    pub azimuth_deg: String,
    pub cloud_okta: String,
    pub albedo: String,
    pub power_mw: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            timestamp: "timestamp".into(),
            dni: "dni".into(),
            dhi: "dhi".into(),
            ghi: "ghi".into(),
            temperature_c: "temperature_c".into(),
            zenith_deg: "zenith_deg".into(),
            azimuth_deg: "azimuth_deg".into(),
            cloud_okta: "cloud_okta".into(),
            albedo: "albedo".into(),
            power_mw: "power_mw".into(),
        }
    }
}

impl ColumnMapping {
    pub fn header_for(&self, column: Column) -> &str {
        match column {
            Column::Dni => &self.dni,
            Column::Dhi => &self.dhi,
            Column::Ghi => &self.ghi,
            Column::TemperatureC => &self.temperature_c,
            Column::ZenithDeg => &self.zenith_deg,
            Column::AzimuthDeg => &self.azimuth_deg,
            Column::CloudOkta => &self.cloud_okta,
            Column::Albedo => &self.albedo,
            Column::PowerMw => &self.power_mw,
        }
    }
}

fn position(headers: &csv::StringRecord, logical: &str, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::SchemaMismatch { logical: logical.to_string(), column: name.to_string() })
}

fn parse_cell(raw: Option<&str>) -> Option<f64> {
    let v: f64 = raw?.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>, DataError> {
    if !path.is_file() {
        return Err(DataError::FileNotFound(path.to_path_buf()));
    }
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?)
}

/// Reads an hourly CSV. Rows whose timestamp cannot be parsed are skipped;
/// numeric cells that cannot be parsed become missing values.
pub fn load_csv(path: &Path, mapping: &ColumnMapping, site: &SiteMeta) -> Result<Dataset, DataError> {
    site.validate()?;
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let ts_idx = position(&headers, "timestamp", &mapping.timestamp)?;
    let mut indices = Vec::with_capacity(Column::ALL.len());
    for column in Column::ALL {
        indices.push((column, position(&headers, column.name(), mapping.header_for(column))?));
    }

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let Some(timestamp) = row.get(ts_idx).and_then(parse_timestamp) else {
            log::warn!("{}: data row {} has an unparseable timestamp, skipped", path.display(), line + 1);
            continue;
        };
        let mut record = SampleRecord::empty(timestamp);
        for &(column, idx) in &indices {
            record.set(column, parse_cell(row.get(idx)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(Dataset::new(site.clone(), records))
}

pub(crate) fn write_records<W: Write>(
    out: W,
    records: &[SampleRecord],
    mapping: &ColumnMapping,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec![mapping.timestamp.as_str()];
    header.extend(Column::ALL.iter().map(|&c| mapping.header_for(c)));
    writer.write_record(&header)?;
    for r in records {
        let mut row = vec![format_timestamp(&r.timestamp)];
        row.extend(Column::ALL.iter().map(|&c| r.get(c).map(|v| v.to_string()).unwrap_or_default()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a dataset in the same layout `load_csv` reads.
pub fn write_csv(path: &Path, dataset: &Dataset, mapping: &ColumnMapping) -> Result<(), DataError> {
    let file = File::create(path)?;
    write_records(file, dataset.records(), mapping)
}

/// One query hour for forecasting.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRow {
    pub timestamp: NaiveDateTime,
    /// Values for the requested columns, in request order.
    pub values: Vec<f64>,
    /// Observed power, when the file carries it.
    pub power_mw: Option<f64>,
}

/// Reads forecast queries: a timestamp plus the requested feature columns.
/// The power column is optional. Every requested cell must be present.
pub fn load_horizon_csv(
    path: &Path,
    mapping: &ColumnMapping,
    columns: &[Column],
) -> Result<Vec<HorizonRow>, DataError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let ts_idx = position(&headers, "timestamp", &mapping.timestamp)?;
    let indices =
        columns.iter().map(|&c| position(&headers, c.name(), mapping.header_for(c))).collect::<Result<Vec<_>, _>>()?;
    let power_idx = position(&headers, "power_mw", &mapping.power_mw).ok();

    let mut rows = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let timestamp = row
            .get(ts_idx)
            .and_then(parse_timestamp)
            .ok_or_else(|| DataError::MissingValue { row: line, column: mapping.timestamp.clone() })?;
        let values = columns
            .iter()
            .zip(&indices)
            .map(|(&c, &idx)| {
                parse_cell(row.get(idx))
                    .ok_or_else(|| DataError::MissingValue { row: line, column: c.name().to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(HorizonRow { timestamp, values, power_mw: power_idx.and_then(|i| parse_cell(row.get(i))) });
    }
    rows.sort_by_key(|r| r.timestamp);
    Ok(rows)
}
