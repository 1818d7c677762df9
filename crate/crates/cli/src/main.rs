use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use pvgp::data::write_csv;
use pvgp::pipeline::{
    cmd_evaluate, cmd_predict, cmd_repeat, cmd_sensitivity, cmd_train, cmd_validate, PercentBase, PipelineConfig,
    PipelineError, MANIFEST_FILE,
};
use pvgp::synthetic::{generate, SyntheticConfig};

const LOG_ENV: &str = "PVGP_LOG";

#[derive(Parser)]
#[command(name = "pvgp", version, about = "Clustered Gaussian-process PV power forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset for missing cells, out-of-range values and gaps.
    Validate(RunArgs),
    /// Cluster, fit one GP per cluster and cross-validate.
    Train(RunArgs),
    /// Forecast the rows of a horizon CSV with a trained run.
    Predict {
        #[command(flatten)]
        run: ArtifactArgs,
        /// CSV with a timestamp column and the run's feature columns.
        #[arg(long)]
        horizon: PathBuf,
    },
    /// Score a trained run on its hold-out days.
    Evaluate {
        #[command(flatten)]
        run: ArtifactArgs,
    },
    /// Train and evaluate for a range of cluster counts.
    Sensitivity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        /// Explicit cluster counts, overriding the range.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Repeat train and evaluate with fresh hold-out days.
    Repeat {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Write a synthetic site-year CSV and a matching config.
    Synth {
        /// Directory for `synthetic.csv` and `config.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2006)]
        seed: u64,
        #[arg(long, default_value_t = 365)]
        days: u32,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ArtifactArgs {
    /// Config whose `output_dir` holds the trained run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of the trained run; outputs are written here too.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>/manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Flags mirroring config keys.
#[derive(Args, Default)]
struct Overrides {
    /// clustering.k
    #[arg(long)]
    clusters: Option<usize>,
    /// clustering.seed
    #[arg(long)]
    cluster_seed: Option<u64>,
    /// holdout.n_days
    #[arg(long)]
    holdout_days: Option<usize>,
    /// holdout.seed
    #[arg(long)]
    holdout_seed: Option<u64>,
    /// cv.k
    #[arg(long)]
    cv_folds: Option<usize>,
    /// cv.seed
    #[arg(long)]
    cv_seed: Option<u64>,
    /// gpr.n_starts
    #[arg(long)]
    n_starts: Option<usize>,
    /// gpr.max_evals
    #[arg(long)]
    max_evals: Option<usize>,
    /// gpr.seed
    #[arg(long)]
    gpr_seed: Option<u64>,
    /// gpr.ard
    #[arg(long)]
    ard: bool,
    /// gpr.max_opt_points (0 = all points)
    #[arg(long)]
    max_opt_points: Option<usize>,
    /// gpr.max_train_points (0 = all points)
    #[arg(long)]
    max_train_points: Option<usize>,
    /// percent_base: capacity or max_observed
    #[arg(long, value_parser = parse_base)]
    percent_base: Option<PercentBase>,
}

fn parse_base(s: &str) -> Result<PercentBase, String> {
    match s {
        "capacity" => Ok(PercentBase::Capacity),
        "max_observed" => Ok(PercentBase::MaxObserved),
        other => Err(format!("unknown percent base `{other}`")),
    }
}

fn cap(n: usize) -> Option<usize> {
    (n > 0).then_some(n)
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.clustering.k, self.clusters);
        set!(cfg.clustering.seed, self.cluster_seed);
        set!(cfg.holdout.n_days, self.holdout_days);
        set!(cfg.holdout.seed, self.holdout_seed);
        set!(cfg.cv.k, self.cv_folds);
        set!(cfg.cv.seed, self.cv_seed);
        set!(cfg.gpr.n_starts, self.n_starts);
        set!(cfg.gpr.max_evals, self.max_evals);
        set!(cfg.gpr.seed, self.gpr_seed);
        set!(cfg.gpr.max_opt_points, self.max_opt_points.map(cap));
        set!(cfg.gpr.max_train_points, self.max_train_points.map(cap));
        set!(cfg.percent_base, self.percent_base);
        if self.ard {
            cfg.gpr.ard = true;
        }
    }
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        self.overrides.apply(&mut cfg);
        Ok(cfg)
    }
}

impl ArtifactArgs {
    /// `(manifest, output directory)`.
    fn resolve(&self) -> Result<(PathBuf, PathBuf), PipelineError> {
        let out = match (&self.out, &self.config, &self.manifest) {
            (Some(out), _, _) => out.clone(),
            (None, Some(cfg), _) => PipelineConfig::load(cfg)?.output_dir,
            (None, None, Some(m)) => m.parent().unwrap_or(Path::new(".")).to_path_buf(),
            (None, None, None) => {
                return Err(PipelineError::Config("one of --out, --config or --manifest is required".into()))
            }
        };
        let manifest = self.manifest.clone().unwrap_or_else(|| out.join(MANIFEST_FILE));
        Ok((manifest, out))
    }
}

fn synth(out: &Path, seed: u64, days: u32) -> Result<(), PipelineError> {
    let cfg = SyntheticConfig { seed, days, ..SyntheticConfig::default() };
    let data = generate(&cfg);
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Io { path: out.to_owned(), source })?;
    let csv = out.join("synthetic.csv");
    write_csv(&csv, &data, &Default::default()).map_err(PipelineError::Load)?;
    let pipeline = PipelineConfig::new("synthetic.csv", cfg.site, "run");
    pipeline.save(&out.join("config.json"))?;
    println!("wrote {} hours to {}", data.len(), csv.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = args.config()?;
            let report = cmd_validate(&cfg)?;
            println!("{report}");
            Ok(if report.has_violations() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Train(args) => {
            let m = cmd_train(&args.config()?)?;
            println!(
                "trained {} clusters on {} records; cv rmse {:.3}% mae {:.3}%",
                m.clusters.len(),
                m.train_records,
                m.cv_pooled.rmse_pct,
                m.cv_pooled.mae_pct
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { run, horizon } => {
            let (manifest, out) = run.resolve()?;
            let rows = cmd_predict(&manifest, &horizon, &out)?;
            println!("wrote {} forecasts to {}", rows.len(), out.join("forecast.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { run } => {
            let (manifest, out) = run.resolve()?;
            let r = cmd_evaluate(&manifest, &out)?;
            println!(
                "hold-out rmse {:.3}% mae {:.3}% over {} hours (cv rmse {:.3}%)",
                r.holdout.rmse_pct, r.holdout.mae_pct, r.holdout.n_points, r.cv_pooled.rmse_pct
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sensitivity { run, k_min, k_max, ks } => {
            let cfg = run.config()?;
            let ks = ks.unwrap_or_else(|| (k_min..=k_max).collect());
            for row in cmd_sensitivity(&cfg, &ks)? {
                match (row.cv_rmse_pct, row.holdout_rmse_pct) {
                    (Some(cv), Some(h)) => println!("k={}: cv rmse {cv:.3}%, hold-out rmse {h:.3}%", row.k),
                    _ => println!("k={}: failed: {}", row.k, row.error.unwrap_or_default()),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Repeat { run, repeats } => {
            let mut cfg = run.config()?;
            if let Some(n) = repeats {
                cfg.repeats = n;
            }
            let r = cmd_repeat(&cfg)?;
            if let (Some(mean), std) = (r.holdout_rmse_pct_mean, r.holdout_rmse_pct_std) {
                println!("hold-out rmse {mean:.3}% (std {:.3}) over {} repeats", std.unwrap_or(0.0), r.rows.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, seed, days } => {
            synth(&out, seed, days)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
