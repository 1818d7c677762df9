use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use proptest::prelude::*;

use pvgp::clustering::{fit_kmeans, ClusterConfig};
use pvgp::data::{
    clean, load_csv, split_holdout, validate_dataset, write_csv, CleanPolicy, Column, ColumnMapping, Dataset,
    SampleRecord, SiteMeta,
};
use pvgp::evaluation::{confidence_interval, kfold_split, metrics, ErrorDistribution};
use pvgp::features::{pearson, select_features, CorrelationReport, SelectionPolicy};

fn site() -> SiteMeta {
    SiteMeta { name: "prop".into(), capacity_mw: 30.0, latitude_deg: 39.7, longitude_deg: -105.0 }
}

fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2006, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn valid_record(ts: NaiveDateTime, seed: u32) -> SampleRecord {
    let s = seed as f64;
    let mut r = SampleRecord::empty(ts);
    r.dni = Some((s * 7.0) % 900.0);
    r.dhi = Some((s * 3.0) % 300.0);
    r.ghi = Some((s * 5.0) % 1000.0);
    r.temperature_c = Some(((s * 1.3) % 40.0) - 10.0);
    r.zenith_deg = Some((s * 11.0) % 180.0);
    r.azimuth_deg = Some((s * 13.0) % 360.0);
    r.cloud_okta = Some((seed % 10) as f64);
    r.albedo = Some(0.2 + (s % 5.0) / 10.0);
    r.power_mw = Some((s * 0.37) % 30.0);
    r
}

/// Hourly dataset of `hours` records with the listed (row, column) cells
/// blanked and the listed hours removed.
fn dataset(hours: usize, blanks: &[(usize, usize)], holes: &[usize]) -> Dataset {
    let holes: BTreeSet<usize> = holes.iter().copied().collect();
    let mut records: Vec<SampleRecord> = (0..hours)
        .filter(|h| !holes.contains(h))
        .map(|h| valid_record(start() + Duration::hours(h as i64), h as u32 * 31 + 7))
        .collect();
    for &(row, col) in blanks {
        if let Some(r) = records.get_mut(row % hours.max(1)) {
            r.set(Column::ALL[col % Column::ALL.len()], None);
        }
    }
    Dataset::new(site(), records)
}

fn policy() -> impl Strategy<Value = CleanPolicy> {
    prop_oneof![Just(CleanPolicy::Drop), (1u32..4).prop_map(|h| CleanPolicy::Interpolate { max_gap_hours: h })]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_whole_days(days in 2usize..12, n_days in 1usize..11, seed in any::<u64>()) {
        prop_assume!(n_days < days);
        let d = dataset(days * 24, &[], &[]);
        let s = split_holdout(&d, n_days, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.holdout.len(), d.len());
        let train: BTreeSet<_> = s.train.records().iter().map(|r| r.timestamp).collect();
        let hold: BTreeSet<_> = s.holdout.records().iter().map(|r| r.timestamp).collect();
        prop_assert!(train.is_disjoint(&hold));
        let all: BTreeSet<_> = d.records().iter().map(|r| r.timestamp).collect();
        prop_assert_eq!(train.union(&hold).copied().collect::<BTreeSet<_>>(), all);
        let train_days: BTreeSet<_> = s.train.days().into_iter().collect();
        let hold_days: BTreeSet<_> = s.holdout.days().into_iter().collect();
        prop_assert!(train_days.is_disjoint(&hold_days));
        prop_assert_eq!(hold_days.len(), n_days);
        let again = split_holdout(&d, n_days, seed).unwrap();
        prop_assert_eq!(again.holdout_days, s.holdout_days);
    }

    #[test]
    fn clean_is_idempotent_and_valid(
        blanks in prop::collection::vec((0usize..72, 0usize..9), 0..12),
        holes in prop::collection::vec(0usize..72, 0..6),
        policy in policy(),
    ) {
        let d = dataset(72, &blanks, &holes);
        let once = clean(&d, policy).unwrap();
        let report = validate_dataset(&once);
        prop_assert!(report.missing_cells.is_empty() && report.range_violations.is_empty());
        prop_assert_eq!(clean(&once, policy).unwrap(), once);
    }

    #[test]
    fn csv_round_trip(blanks in prop::collection::vec((0usize..30, 0usize..9), 0..6), holes in prop::collection::vec(0usize..30, 0..4)) {
        let d = dataset(30, &blanks, &holes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&path, &d, &ColumnMapping::default()).unwrap();
        let back = load_csv(&path, &ColumnMapping::default(), &site()).unwrap();
        prop_assert_eq!(&back, &d);
        let path2 = dir.path().join("d2.csv");
        write_csv(&path2, &back, &ColumnMapping::default()).unwrap();
        prop_assert_eq!(load_csv(&path2, &ColumnMapping::default(), &site()).unwrap(), back);
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (Ok(ab), Ok(ba)) = (pearson(&a, &b), pearson(&b, &a)) else { return Ok(()) };
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
        let up: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
        let down: Vec<f64> = a.iter().map(|v| -scale * v + shift).collect();
        prop_assert!((pearson(&up, &b).unwrap() - ab).abs() <= 1e-10);
        prop_assert!((pearson(&down, &b).unwrap() + ab).abs() <= 1e-10);
    }

    #[test]
    fn selection_is_monotone_in_threshold(
        rhos in prop::collection::vec(-1.0f64..1.0, 8),
        lo in 0.0f64..1.0,
        step in 0.0f64..0.5,
    ) {
        let values: Vec<(Column, f64)> = Column::FEATURES.iter().copied().zip(rhos).collect();
        let report = CorrelationReport::from_values(&values, 100);
        let policy = |t: f64| SelectionPolicy { threshold: t, ..SelectionPolicy::default() };
        let loose = select_features(&report, &policy(lo)).unwrap();
        prop_assert_eq!(&select_features(&report, &policy(lo)).unwrap(), &loose);
        let strict = select_features(&report, &policy(lo + step)).unwrap();
        prop_assert!(strict.selected.iter().all(|c| loose.selected.contains(c)));
        prop_assert!(strict.selected.contains(&Column::CloudOkta));
        prop_assert!(!strict.selected.contains(&Column::Albedo));
    }

    #[test]
    fn metric_invariants(
        pairs in prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 1..60),
        rotate in 0usize..60,
    ) {
        let actual: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let predicted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let m = metrics(&actual, &predicted, 30.0).unwrap();
        prop_assert!(m.rmse_mw >= m.mae_mw - 1e-12);
        prop_assert!((m.mse_mw2 - m.rmse_mw * m.rmse_mw).abs() <= 1e-10 * m.mse_mw2.max(1.0));
        let k = rotate % actual.len();
        let mut a2 = actual.clone();
        let mut p2 = predicted.clone();
        a2.rotate_left(k);
        p2.rotate_left(k);
        let m2 = metrics(&a2, &p2, 30.0).unwrap();
        prop_assert!((m2.rmse_mw - m.rmse_mw).abs() <= 1e-12 * m.rmse_mw.max(1.0));
        prop_assert!((m2.mae_mw - m.mae_mw).abs() <= 1e-12 * m.mae_mw.max(1.0));
    }

    #[test]
    fn kfold_is_a_balanced_partition(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().all(|&s| s == n / k || s == n.div_ceil(k)));
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(kfold_split(n, k, seed).unwrap(), folds);
    }

    #[test]
    fn interval_width_shrinks_with_root_n(eps in -1.0f64..1.0, sigma in 0.0f64..2.0, n in 2usize..5000) {
        for level in [0.90, 0.95, 0.99] {
            let ci = confidence_interval(&ErrorDistribution { eps_bar: eps, sigma_eps: sigma, n }, level).unwrap();
            let ci2 = confidence_interval(&ErrorDistribution { eps_bar: eps, sigma_eps: sigma, n: 2 * n }, level).unwrap();
            prop_assert!(ci.lo_mw <= ci.hi_mw);
            prop_assert!(((ci.hi_mw - eps) - (eps - ci.lo_mw)).abs() <= 1e-12);
            let (w, w2) = (ci.hi_mw - ci.lo_mw, ci2.hi_mw - ci2.lo_mw);
            prop_assert!((w - w2 * 2f64.sqrt()).abs() <= 1e-12 * w.max(1.0));
        }
    }

    #[test]
    fn kmeans_fixpoint_and_normalization(
        points in prop::collection::vec((0u32..24, 0.0f64..30.0), 8..60),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let pts: Vec<[f64; 2]> = points.iter().map(|&(h, p)| [h as f64, p]).collect();
        let cfg = ClusterConfig { k, n_restarts: 3, seed, ..ClusterConfig::default() };
        let Ok(model) = fit_kmeans(&pts, &cfg) else { return Ok(()) };
        prop_assert!(model.cluster_sizes.iter().all(|&s| s > 0));
        for (p, id) in pts.iter().zip(&model.assignments) {
            prop_assert_eq!(model.assign(*p), *id);
            prop_assert_eq!(model.assign_normalized(model.normalize(*p)), *id);
        }
        let (standard, weighted) = model.objective(&pts);
        prop_assert!((standard - model.inertia_standard).abs() <= 1e-12 * standard.max(1.0));
        prop_assert!((weighted - model.inertia_weighted).abs() <= 1e-12 * weighted.max(1.0));
    }
}
