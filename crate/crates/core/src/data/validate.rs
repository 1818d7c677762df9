use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{format_timestamp, Column, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub row: usize,
    pub column: Column,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub row: usize,
    pub column: Column,
    pub value: f64,
}

/// A run of absent hours; `start` and `end` are the first and last missing
/// hour, inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    #[serde(with = "ts_format")]
    pub start: NaiveDateTime,
    #[serde(with = "ts_format")]
    pub end: NaiveDateTime,
}

impl Gap {
    pub fn hours(&self) -> i64 {
        (self.end - self.start).num_hours() + 1
    }
}

mod ts_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        crate::data::parse_timestamp(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{raw}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub row_count: usize,
    pub missing_cells: Vec<MissingCell>,
    pub range_violations: Vec<RangeViolation>,
    pub gap_list: Vec<Gap>,
}

impl ValidationReport {
    /// Missing cells and out-of-range values. Gaps are reported but are not
    /// violations.
    pub fn has_violations(&self) -> bool {
        !self.missing_cells.is_empty() || !self.range_violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} rows, {} missing cells, {} range violations, {} gaps",
            self.row_count,
            self.missing_cells.len(),
            self.range_violations.len(),
            self.gap_list.len()
        )?;
        for gap in &self.gap_list {
            write!(
                f,
                "\n  gap {} .. {} ({} h)",
                format_timestamp(&gap.start),
                format_timestamp(&gap.end),
                gap.hours()
            )?;
        }
        Ok(())
    }
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let capacity = d.site.capacity_mw;
    let mut report = ValidationReport { row_count: d.len(), ..Default::default() };
    for (row, record) in d.records().iter().enumerate() {
        for column in Column::ALL {
            match record.get(column) {
                None => report.missing_cells.push(MissingCell { row, column }),
                Some(value) if !column.in_range(value, capacity) => {
                    report.range_violations.push(RangeViolation { row, column, value })
                }
                Some(_) => {}
            }
        }
    }
    for pair in d.records().windows(2) {
        let (a, b) = (pair[0].timestamp, pair[1].timestamp);
        if b - a > Duration::hours(1) {
            report.gap_list.push(Gap { start: a + Duration::hours(1), end: b - Duration::hours(1) });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil;

    #[test]
    fn clean_data_has_empty_report() {
        let r = validate_dataset(&testutil::hourly(48));
        assert_eq!(r.row_count, 48);
        assert!(r.missing_cells.is_empty());
        assert!(r.range_violations.is_empty());
        assert!(r.gap_list.is_empty());
        assert!(!r.has_violations());
    }

    #[test]
    fn zenith_violation_is_reported_exactly() {
        let d = testutil::hourly(5);
        let mut records = d.records().to_vec();
        records[2].zenith_deg = Some(200.0);
        let r = validate_dataset(&Dataset::new(d.site.clone(), records));
        assert_eq!(r.range_violations, vec![RangeViolation { row: 2, column: Column::ZenithDeg, value: 200.0 }]);
    }

    #[test]
    fn two_hour_gap() {
        let d = testutil::hourly(24);
        let d = d.filter(|r| r.hour() != 3 && r.hour() != 4);
        let r = validate_dataset(&d);
        assert_eq!(r.gap_list.len(), 1);
        assert_eq!(r.gap_list[0].hours(), 2);
        assert_eq!(r.gap_list[0].start.format("%H").to_string(), "03");
    }

    #[test]
    fn missing_cells_listed() {
        let d = testutil::hourly(3);
        let mut records = d.records().to_vec();
        records[1].albedo = None;
        let r = validate_dataset(&Dataset::new(d.site.clone(), records));
        assert_eq!(r.missing_cells, vec![MissingCell { row: 1, column: Column::Albedo }]);
    }

    #[test]
    fn report_json_uses_field_names() {
        let v = serde_json::to_value(ValidationReport::default()).unwrap();
        for key in ["row_count", "missing_cells", "range_violations", "gap_list"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
