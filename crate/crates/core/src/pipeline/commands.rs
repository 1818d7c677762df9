use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use chrono::NaiveDateTime;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{ClusterArtifact, ClusterSummary, RunManifest, Timings, TrainedRun, MANIFEST_FILE};
use super::{csv_err, io_err, write_json, PercentBase, PipelineConfig, PipelineError};
use crate::clustering::{fit_kmeans, ClusterId};
use crate::data::{
    clean, load_csv, load_horizon_csv, split_holdout, validate_dataset, write_csv, Column, ColumnMapping, SampleRecord,
    ValidationReport,
};
use crate::evaluation::{
    confidence_interval, cross_validate, fit_normal, metrics, z_star, ConfidenceInterval, CvResult, ErrorDistribution,
    MetricSet,
};
use crate::features::{correlation_report, select_features};
use crate::gpr::{self, GprOptions, TrainedGpr};
use crate::linalg::Matrix;

/// Loads and checks the configured dataset; writes `validation.json`.
pub fn cmd_validate(cfg: &PipelineConfig) -> Result<ValidationReport, PipelineError> {
    let d = load_csv(&cfg.data.path, &cfg.data.columns, &cfg.site).map_err(PipelineError::Load)?;
    let report = validate_dataset(&d);
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    write_json(&cfg.output_dir.join("validation.json"), &report)?;
    Ok(report)
}

fn feature_matrix<'a>(rows: impl Iterator<Item = &'a SampleRecord>, features: &[Column]) -> Matrix {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        data.extend(features.iter().map(|&c| r.get(c).unwrap_or(f64::NAN)));
        n += 1;
    }
    Matrix::from_vec(n, features.len(), data).expect("row-major buffer matches shape")
}

fn seconds_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// clean → hold-out split → k-means → feature selection → one GP per
/// cluster with k-fold CV. Nothing downstream of the split sees hold-out
/// records. Writes every artifact plus `manifest.json` into the output
/// directory and returns the manifest.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let started = Instant::now();
    let out = &cfg.output_dir;
    fs::create_dir_all(out.join("models")).map_err(io_err(out))?;

    let raw = load_csv(&cfg.data.path, &cfg.data.columns, &cfg.site).map_err(PipelineError::Load)?;
    let data = clean(&raw, cfg.clean).map_err(PipelineError::Clean)?;
    let split = split_holdout(&data, cfg.holdout.n_days, cfg.holdout.seed).map_err(PipelineError::Split)?;
    let train = &split.train;
    let load_s = seconds_since(started);
    info!("{} records after cleaning: {} train, {} hold-out", data.len(), train.len(), split.holdout.len());

    let t = Instant::now();
    let points: Vec<[f64; 2]> =
        train.records().iter().map(|r| [r.hour() as f64, r.power_mw.unwrap_or(f64::NAN)]).collect();
    let mut cluster_model = fit_kmeans(&points, &cfg.clustering)?;
    let calendar: Vec<(u32, u32)> = train.records().iter().map(|r| (r.hour(), r.day_of_year())).collect();
    cluster_model.build_hour_table(&calendar)?;
    let clustering_s = seconds_since(t);
    info!("cluster sizes {:?}", cluster_model.cluster_sizes);

    let t = Instant::now();
    let correlation = correlation_report(train)?;
    let selection = select_features(&correlation, &cfg.features)?;
    let features = selection.selected.clone();
    let features_s = seconds_since(t);
    info!("selected features {:?}", features.iter().map(|c| c.name()).collect::<Vec<_>>());

    let x_all = feature_matrix(train.records().iter(), &features);
    let y_all: Vec<f64> = train.records().iter().map(|r| r.power_mw.unwrap_or(f64::NAN)).collect();
    let base_mw = match cfg.percent_base {
        PercentBase::Capacity => cfg.site.capacity_mw,
        PercentBase::MaxObserved => y_all.iter().copied().fold(0.0, f64::max),
    };
    if !(base_mw > 0.0) {
        return Err(PipelineError::Config(format!("percent base must be positive, got {base_mw}")));
    }

    let mut members = vec![Vec::new(); cluster_model.k()];
    for (i, id) in cluster_model.assignments.iter().enumerate() {
        members[id.index()].push(i);
    }
    let needed = 5 * cfg.cv.k;
    for (c, idx) in members.iter().enumerate() {
        if idx.len() < needed {
            return Err(PipelineError::TooFewPoints { cluster: ClusterId::from_index(c).0, needed, got: idx.len() });
        }
    }

    let t = Instant::now();
    let opts = GprOptions { drop_constant_columns: true, ..cfg.gpr };
    let fitted: Vec<(TrainedGpr, CvResult)> = members
        .par_iter()
        .enumerate()
        .map(|(c, idx)| {
            let cluster = ClusterId::from_index(c).0;
            let x = x_all.select_rows(idx);
            let y: Vec<f64> = idx.iter().map(|&i| y_all[i]).collect();
            let model = gpr::fit(&x, &y, &opts).map_err(|source| PipelineError::Fit { cluster, source })?;
            let cv = cross_validate(&x, &y, &opts, cfg.cv.k, cfg.cv.seed, base_mw)
                .map_err(|source| PipelineError::CrossValidation { cluster, source })?;
            info!("cluster {cluster}: {} points, cv rmse {:.3}%", y.len(), cv.mean.rmse_pct);
            Ok((model, cv))
        })
        .collect::<Result<_, PipelineError>>()?;
    let fit_s = seconds_since(t);

    let mut oof_actual = Vec::with_capacity(y_all.len());
    let mut oof_pred = Vec::with_capacity(y_all.len());
    let mut clusters = Vec::with_capacity(fitted.len());
    let mut cv_by_cluster = BTreeMap::new();
    for (c, ((model, cv), idx)) in fitted.into_iter().zip(&members).enumerate() {
        let id = ClusterId::from_index(c);
        oof_actual.extend(idx.iter().map(|&i| y_all[i]));
        oof_pred.extend_from_slice(&cv.oof_mean);
        let model_path = PathBuf::from("models").join(format!("cluster_{}.json", id.0));
        let artifact = ClusterArtifact { cluster: id, features: features.clone(), model: model.to_artifact() };
        write_json(&out.join(&model_path), &artifact)?;
        clusters.push(ClusterSummary {
            cluster: id,
            n_points: idx.len(),
            model_path,
            hyperparams: model.hp.clone(),
            beta: model.beta,
            log_likelihood: model.posterior.log_likelihood,
            fold_sizes: cv.fold_assignments.iter().map(Vec::len).collect(),
            cv_mean: cv.mean,
        });
        cv_by_cluster.insert(id.0, cv);
    }
    let cv_pooled = metrics(&oof_actual, &oof_pred, base_mw)?;

    let cluster_model_path = PathBuf::from("cluster_model.json");
    write_json(&out.join(&cluster_model_path), &cluster_model)?;
    let correlation_path = PathBuf::from("correlation.json");
    write_json(&out.join(&correlation_path), &correlation)?;
    let corr_csv = out.join("correlation.csv");
    let file = fs::File::create(&corr_csv).map_err(io_err(&corr_csv))?;
    correlation.write_csv(file).map_err(csv_err(&corr_csv))?;
    write_json(&out.join("features.json"), &selection)?;
    let cv_path = PathBuf::from("cv.json");
    write_json(&out.join(&cv_path), &cv_by_cluster)?;
    let holdout_path = PathBuf::from("holdout.csv");
    write_csv(&out.join(&holdout_path), &split.holdout, &ColumnMapping::default()).map_err(PipelineError::Load)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: cfg.clone(),
        data_fingerprint: raw.fingerprint(),
        train_fingerprint: train.fingerprint(),
        holdout_fingerprint: split.holdout.fingerprint(),
        train_records: train.len(),
        holdout_records: split.holdout.len(),
        train_days: train.days(),
        holdout_days: split.holdout_days.clone(),
        base_mw,
        features,
        cluster_model_path,
        holdout_path,
        correlation_path,
        cv_path,
        clusters,
        cv_pooled,
        timings: Timings { load_s, clustering_s, features_s, fit_s, total_s: seconds_since(started) },
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub timestamp: NaiveDateTime,
    pub cluster: ClusterId,
    pub mean_mw: f64,
    /// Predictive variance including observation noise.
    pub variance_mw2: f64,
    /// `(lo, hi)` per configured confidence level.
    pub intervals: Vec<(f64, f64)>,
}

/// Routes each query hour to its cluster by hour and season and predicts
/// with that cluster's model. `x` holds the manifest's feature columns.
pub fn forecast(run: &TrainedRun, timestamps: &[NaiveDateTime], x: &Matrix) -> Result<Vec<ForecastRow>, PipelineError> {
    if x.rows() != timestamps.len() {
        return Err(PipelineError::Predict(gpr::GprError::DimensionMismatch {
            expected: timestamps.len(),
            got: x.rows(),
        }));
    }
    let levels = &run.manifest.config.ci_levels;
    let z: Vec<f64> = levels.iter().map(|&l| z_star(l)).collect::<Result<_, _>>()?;
    let routes: Vec<ClusterId> = timestamps
        .iter()
        .map(|ts| {
            let r = SampleRecord::empty(*ts);
            run.cluster_model.assign_forecast(r.hour(), r.day_of_year())
        })
        .collect();
    let mut mean = vec![0.0; timestamps.len()];
    let mut variance = vec![0.0; timestamps.len()];
    for (id, model) in &run.models {
        let idx: Vec<usize> = (0..routes.len()).filter(|&i| routes[i] == *id).collect();
        if idx.is_empty() {
            continue;
        }
        let p = model.predict(&x.select_rows(&idx), true).map_err(PipelineError::Predict)?;
        for (k, &i) in idx.iter().enumerate() {
            mean[i] = p.mean[k];
            variance[i] = p.variance[k];
        }
    }
    Ok((0..timestamps.len())
        .map(|i| {
            let sd = variance[i].sqrt();
            ForecastRow {
                timestamp: timestamps[i],
                cluster: routes[i],
                mean_mw: mean[i],
                variance_mw2: variance[i],
                intervals: z.iter().map(|z| (mean[i] - z * sd, mean[i] + z * sd)).collect(),
            }
        })
        .collect())
}

fn level_tag(level: f64) -> String {
    format!("ci{}", (level * 100.0).round() as u32)
}

fn format_ts(ts: &NaiveDateTime) -> String {
    ts.format(crate::data::TIMESTAMP_FORMAT).to_string()
}

/// Forecasts every row of a horizon CSV and writes `forecast.csv`.
pub fn cmd_predict(
    manifest_path: &Path,
    horizon_path: &Path,
    out_dir: &Path,
) -> Result<Vec<ForecastRow>, PipelineError> {
    let run = TrainedRun::load(manifest_path)?;
    let features = &run.manifest.features;
    let rows =
        load_horizon_csv(horizon_path, &run.manifest.config.data.columns, features).map_err(PipelineError::Load)?;
    let timestamps: Vec<NaiveDateTime> = rows.iter().map(|r| r.timestamp).collect();
    let x = Matrix::from_vec(rows.len(), features.len(), rows.iter().flat_map(|r| r.values.clone()).collect())
        .expect("horizon rows have one value per feature");
    let forecasts = forecast(&run, &timestamps, &x)?;

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("forecast.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["timestamp".to_string(), "cluster".into(), "mean_mw".into(), "variance_mw2".into()];
    for &l in &run.manifest.config.ci_levels {
        header.push(format!("{}_lo", level_tag(l)));
        header.push(format!("{}_hi", level_tag(l)));
    }
    w.write_record(&header).map_err(csv_err(&path))?;
    for f in &forecasts {
        let mut rec =
            vec![format_ts(&f.timestamp), f.cluster.0.to_string(), f.mean_mw.to_string(), f.variance_mw2.to_string()];
        for (lo, hi) in &f.intervals {
            rec.push(lo.to_string());
            rec.push(hi.to_string());
        }
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(forecasts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub distribution: ErrorDistribution,
    pub intervals: Vec<ConfidenceInterval>,
}

fn interval_report(errors: &[f64], levels: &[f64]) -> Result<Option<IntervalReport>, PipelineError> {
    if errors.len() < 2 {
        return Ok(None);
    }
    let distribution = fit_normal(errors)?;
    let intervals = levels.iter().map(|&l| confidence_interval(&distribution, l)).collect::<Result<_, _>>()?;
    Ok(Some(IntervalReport { distribution, intervals }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvaluation {
    pub cluster: ClusterId,
    /// `None` when no hold-out hour was routed to the cluster.
    pub metrics: Option<MetricSet>,
    pub errors: Option<IntervalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub holdout: MetricSet,
    pub cv_pooled: MetricSet,
    /// Error statistics of `actual − predicted` over all hold-out hours.
    pub errors: Option<IntervalReport>,
    pub clusters: Vec<ClusterEvaluation>,
}

/// Forecasts the recorded hold-out days and scores them. Writes
/// `evaluation.json` and `forecast_vs_actual.csv`.
pub fn cmd_evaluate(manifest_path: &Path, out_dir: &Path) -> Result<EvaluationReport, PipelineError> {
    let run = TrainedRun::load(manifest_path)?;
    let m = &run.manifest;
    let rows = load_horizon_csv(&run.dir.join(&m.holdout_path), &ColumnMapping::default(), &m.features)
        .map_err(PipelineError::Load)?;
    let timestamps: Vec<NaiveDateTime> = rows.iter().map(|r| r.timestamp).collect();
    let actual: Vec<f64> = rows.iter().map(|r| r.power_mw.unwrap_or(f64::NAN)).collect();
    let x = Matrix::from_vec(rows.len(), m.features.len(), rows.iter().flat_map(|r| r.values.clone()).collect())
        .expect("hold-out rows have one value per feature");
    let forecasts = forecast(&run, &timestamps, &x)?;
    let predicted: Vec<f64> = forecasts.iter().map(|f| f.mean_mw).collect();
    let errors: Vec<f64> = actual.iter().zip(&predicted).map(|(a, p)| a - p).collect();
    let levels = &m.config.ci_levels;

    let holdout = metrics(&actual, &predicted, m.base_mw)?;
    let mut clusters = Vec::new();
    for id in run.models.keys() {
        let idx: Vec<usize> = (0..forecasts.len()).filter(|&i| forecasts[i].cluster == *id).collect();
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let metrics = if idx.is_empty() { None } else { Some(metrics(&pick(&actual), &pick(&predicted), m.base_mw)?) };
        clusters.push(ClusterEvaluation { cluster: *id, metrics, errors: interval_report(&pick(&errors), levels)? });
    }
    let report =
        EvaluationReport { holdout, cv_pooled: m.cv_pooled, errors: interval_report(&errors, levels)?, clusters };

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("evaluation.json"), &report)?;
    let level =
        if levels.iter().any(|l| (l - 0.95).abs() < 1e-9) { 0.95 } else { levels.first().copied().unwrap_or(0.95) };
    let z = z_star(level)?;
    let path = out_dir.join("forecast_vs_actual.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["timestamp", "actual_mw", "predicted_mw", "variance_mw2", "ci_lo", "ci_hi"])
        .map_err(csv_err(&path))?;
    for (f, a) in forecasts.iter().zip(&actual) {
        let sd = f.variance_mw2.sqrt();
        w.write_record([
            format_ts(&f.timestamp),
            a.to_string(),
            f.mean_mw.to_string(),
            f.variance_mw2.to_string(),
            (f.mean_mw - z * sd).to_string(),
            (f.mean_mw + z * sd).to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub k: usize,
    pub status: String,
    pub cv_rmse_pct: Option<f64>,
    pub cv_mae_pct: Option<f64>,
    /// `100·MSE/base²`.
    pub cv_nmse_pct: Option<f64>,
    pub holdout_rmse_pct: Option<f64>,
    pub holdout_mae_pct: Option<f64>,
    pub holdout_nmse_pct: Option<f64>,
    pub error: Option<String>,
}

fn train_and_evaluate(cfg: &PipelineConfig) -> Result<(RunManifest, EvaluationReport), PipelineError> {
    let manifest = cmd_train(cfg)?;
    let report = cmd_evaluate(&cfg.output_dir.join(MANIFEST_FILE), &cfg.output_dir)?;
    Ok((manifest, report))
}

/// Trains and evaluates once per cluster count, each run in `k<k>/` under
/// the output directory, all with the same hold-out days. A failing `k`
/// yields a row marked `failed`. Writes `sensitivity.csv`.
pub fn cmd_sensitivity(cfg: &PipelineConfig, ks: &[usize]) -> Result<Vec<SensitivityRow>, PipelineError> {
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut sub = cfg.clone();
        sub.clustering.k = k;
        sub.output_dir = cfg.output_dir.join(format!("k{k}"));
        let row = match train_and_evaluate(&sub) {
            Ok((m, e)) => {
                let nmse = |set: &MetricSet| 100.0 * set.mse_mw2 / (m.base_mw * m.base_mw);
                SensitivityRow {
                    k,
                    status: "ok".into(),
                    cv_rmse_pct: Some(m.cv_pooled.rmse_pct),
                    cv_mae_pct: Some(m.cv_pooled.mae_pct),
                    cv_nmse_pct: Some(nmse(&m.cv_pooled)),
                    holdout_rmse_pct: Some(e.holdout.rmse_pct),
                    holdout_mae_pct: Some(e.holdout.mae_pct),
                    holdout_nmse_pct: Some(nmse(&e.holdout)),
                    error: None,
                }
            }
            Err(err) => {
                warn!("k = {k} failed: {err}");
                SensitivityRow {
                    k,
                    status: "failed".into(),
                    cv_rmse_pct: None,
                    cv_mae_pct: None,
                    cv_nmse_pct: None,
                    holdout_rmse_pct: None,
                    holdout_mae_pct: None,
                    holdout_nmse_pct: None,
                    error: Some(err.to_string()),
                }
            }
        };
        rows.push(row);
    }
    let path = cfg.output_dir.join("sensitivity.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for r in &rows {
        w.serialize(r).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub repeat: usize,
    pub holdout_seed: u64,
    pub cv: Option<MetricSet>,
    pub holdout: Option<MetricSet>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub rows: Vec<RepeatRow>,
    /// Mean and sample standard deviation of hold-out `rmse_pct` over the
    /// successful repeats.
    pub holdout_rmse_pct_mean: Option<f64>,
    pub holdout_rmse_pct_std: Option<f64>,
}

/// Repeats train and evaluate `cfg.repeats` times, drawing fresh hold-out
/// days each time from seeds `holdout.seed`, `holdout.seed + 1`, …
/// Writes `repeats.json`.
pub fn cmd_repeat(cfg: &PipelineConfig) -> Result<RepeatReport, PipelineError> {
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let mut rows = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        let mut sub = cfg.clone();
        sub.holdout.seed = cfg.holdout.seed.wrapping_add(repeat as u64);
        sub.output_dir = cfg.output_dir.join(format!("repeat_{repeat}"));
        rows.push(match train_and_evaluate(&sub) {
            Ok((m, e)) => RepeatRow {
                repeat,
                holdout_seed: sub.holdout.seed,
                cv: Some(m.cv_pooled),
                holdout: Some(e.holdout),
                error: None,
            },
            Err(err) => {
                warn!("repeat {repeat} failed: {err}");
                RepeatRow {
                    repeat,
                    holdout_seed: sub.holdout.seed,
                    cv: None,
                    holdout: None,
                    error: Some(err.to_string()),
                }
            }
        });
    }
    let scores: Vec<f64> = rows.iter().filter_map(|r| r.holdout.map(|h| h.rmse_pct)).collect();
    let dist = fit_normal(&scores).ok();
    let report = RepeatReport {
        holdout_rmse_pct_mean: dist.map(|d| d.eps_bar).or(scores.first().copied()),
        holdout_rmse_pct_std: dist.map(|d| d.sigma_eps),
        rows,
    };
    write_json(&cfg.output_dir.join("repeats.json"), &report)?;
    Ok(report)
}
