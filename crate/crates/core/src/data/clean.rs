use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{Column, DataError, Dataset, SampleRecord};

/// How `clean` treats missing or out-of-range cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CleanPolicy {
    /// Remove every row with a missing or out-of-range cell.
    #[default]
    Drop,
    /// Fill runs of at most `max_gap_hours` bad hours by linear interpolation
    /// in time, per column; drop the rows of longer runs. Absent hours of
    /// timestamp gaps no longer than the bound are reinstated and filled.
    Interpolate { max_gap_hours: u32 },
}

pub fn clean(d: &Dataset, policy: CleanPolicy) -> Result<Dataset, DataError> {
    let capacity = d.site.capacity_mw;
    let records = match policy {
        CleanPolicy::Drop => d.records().iter().filter(|r| r.is_valid(capacity)).cloned().collect::<Vec<_>>(),
        CleanPolicy::Interpolate { max_gap_hours } => {
            if max_gap_hours < 1 {
                return Err(DataError::InvalidPolicy("interpolation gap bound must be at least 1 hour".into()));
            }
            interpolate(d.records(), max_gap_hours as i64, capacity)
        }
    };
    if records.is_empty() {
        return Err(DataError::AllRowsDropped);
    }
    Ok(Dataset::new(d.site.clone(), records))
}

fn interpolate(records: &[SampleRecord], max_gap: i64, capacity: f64) -> Vec<SampleRecord> {
    let mut timeline: Vec<SampleRecord> = Vec::with_capacity(records.len());
    for r in records {
        if let Some(last) = timeline.last() {
            let missing = (r.timestamp - last.timestamp).num_hours() - 1;
            if missing >= 1 && missing <= max_gap {
                let base = last.timestamp;
                for h in 1..=missing {
                    timeline.push(SampleRecord::empty(base + Duration::hours(h)));
                }
            }
        }
        timeline.push(r.clone());
    }

    let n = timeline.len();
    let mut dropped = vec![false; n];
    for column in Column::ALL {
        let ok: Vec<bool> =
            timeline.iter().map(|r| matches!(r.get(column), Some(v) if column.in_range(v, capacity))).collect();
        let mut i = 0;
        while i < n {
            if ok[i] {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < n && !ok[j + 1] {
                j += 1;
            }
            let bracket = (i > 0 && j + 1 < n).then(|| (i - 1, j + 1));
            let fillable =
                bracket.filter(|&(p, q)| (timeline[q].timestamp - timeline[p].timestamp).num_hours() - 1 <= max_gap);
            match fillable {
                Some((p, q)) => {
                    let (t0, t1) = (timeline[p].timestamp, timeline[q].timestamp);
                    let (v0, v1) = (timeline[p].get(column).unwrap(), timeline[q].get(column).unwrap());
                    let span = (t1 - t0).num_hours() as f64;
                    for rec in &mut timeline[i..=j] {
                        let w = (rec.timestamp - t0).num_hours() as f64 / span;
                        rec.set(column, Some(lerp(column, v0, v1, w)));
                    }
                }
                None => dropped[i..=j].iter_mut().for_each(|d| *d = true),
            }
            i = j + 1;
        }
    }
    timeline.into_iter().zip(dropped).filter_map(|(r, d)| (!d).then_some(r)).collect()
}

fn lerp(column: Column, v0: f64, v1: f64, w: f64) -> f64 {
    match column {
        Column::AzimuthDeg => {
            // shortest arc
            let mut delta = (v1 - v0) % 360.0;
            if delta > 180.0 {
                delta -= 360.0;
            } else if delta < -180.0 {
                delta += 360.0;
            }
            (v0 + w * delta).rem_euclid(360.0)
        }
        Column::CloudOkta => (v0 + w * (v1 - v0)).round(),
        _ => v0 + w * (v1 - v0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{testutil, validate_dataset};

    fn with_temps(temps: &[Option<f64>]) -> Dataset {
        let d = testutil::hourly(temps.len());
        let mut records = d.records().to_vec();
        for (r, t) in records.iter_mut().zip(temps) {
            r.temperature_c = *t;
        }
        Dataset::new(d.site.clone(), records)
    }

    #[test]
    fn clean_data_is_a_fixpoint() {
        let d = testutil::hourly(30);
        assert_eq!(clean(&d, CleanPolicy::Drop).unwrap(), d);
        assert_eq!(clean(&d, CleanPolicy::Interpolate { max_gap_hours: 3 }).unwrap(), d);
    }

    #[test]
    fn drop_removes_row_with_missing_cell() {
        let d = with_temps(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(clean(&d, CleanPolicy::Drop).unwrap().len(), 2);
    }

    #[test]
    fn interpolation_fills_midpoint() {
        let d = with_temps(&[Some(10.0), None, Some(12.0)]);
        let c = clean(&d, CleanPolicy::Interpolate { max_gap_hours: 2 }).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.records()[1].temperature_c, Some(11.0));
    }

    #[test]
    fn long_runs_are_dropped() {
        let d = with_temps(&[Some(10.0), None, None, None, Some(12.0)]);
        let c = clean(&d, CleanPolicy::Interpolate { max_gap_hours: 2 }).unwrap();
        assert_eq!(c.len(), 2);
        assert!(!validate_dataset(&c).has_violations());
    }

    #[test]
    fn edge_runs_are_dropped() {
        let d = with_temps(&[None, Some(1.0), Some(2.0)]);
        let c = clean(&d, CleanPolicy::Interpolate { max_gap_hours: 5 }).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn short_timestamp_gaps_are_reinstated() {
        let d = testutil::hourly(6).filter(|r| r.hour() != 2);
        let c = clean(&d, CleanPolicy::Interpolate { max_gap_hours: 1 }).unwrap();
        assert_eq!(c.len(), 6);
        assert!(validate_dataset(&c).gap_list.is_empty());
        assert_eq!(c.records()[2].power_mw, Some(2.0));
    }

    #[test]
    fn azimuth_interpolates_across_north() {
        assert!((lerp(Column::AzimuthDeg, 350.0, 10.0, 0.5) - 0.0).abs() < 1e-12);
        assert!((lerp(Column::AzimuthDeg, 350.0, 10.0, 0.25) - 355.0).abs() < 1e-12);
    }

    #[test]
    fn all_rows_dropped() {
        let d = with_temps(&[None, None]);
        assert!(matches!(clean(&d, CleanPolicy::Drop), Err(DataError::AllRowsDropped)));
    }

    #[test]
    fn zero_gap_bound_rejected() {
        let d = testutil::hourly(2);
        assert!(matches!(clean(&d, CleanPolicy::Interpolate { max_gap_hours: 0 }), Err(DataError::InvalidPolicy(_))));
    }

    #[test]
    fn policy_json_shape() {
        let p: CleanPolicy = serde_json::from_str(r#"{"policy":"interpolate","max_gap_hours":2}"#).unwrap();
        assert_eq!(p, CleanPolicy::Interpolate { max_gap_hours: 2 });
        let p: CleanPolicy = serde_json::from_str(r#"{"policy":"drop"}"#).unwrap();
        assert_eq!(p, CleanPolicy::Drop);
    }
}
