//! Subcommand definitions and their file outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stnn_core::baselines::{seir_integrate, trajectory_csv, CurveFamily, CurveFit, SeirParams, SeirState};
use stnn_core::data::{correlate, load_factors, load_timeseries, CorrelateOptions, FactorTable, Reduce};
use stnn_core::forecast::{CurveForecaster, FitContext, ForecasterRegistry, ModelSpec};
use stnn_core::optim::{OptimizerConfig, TrainConfig};
use stnn_core::{Error, Result, SpatialFeatureSet};

use crate::compare;
use crate::config::{ExperimentConfig, Overrides};
use crate::experiment::{self, Checkpoint};

#[derive(Debug, Parser)]
#[command(name = "stnn", version, about = "Spatio-temporal epidemic forecasting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataFlags {
    /// Replaces `data.series` from the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Replaces `data.spatial`; repeat once per spatial matrix.
    #[arg(long)]
    pub spatial: Vec<PathBuf>,
    /// Replaces `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl DataFlags {
    fn overrides(&self) -> Overrides {
        Overrides { data: self.data.clone(), spatial: self.spatial.clone(), seed: self.seed }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the leading split of each period and report train/test RMSE.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        flags: DataFlags,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Forecast the days after a checkpoint's training data.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: u64,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Score a checkpoint against observed days after its training data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Series to score against; the checkpoint's own data file by default.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Days to score; every available day by default.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: Option<u64>,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Train several configs over the same data and rank them.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        flags: DataFlags,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Pearson correlation of per-location factors with case counts.
    Correlate {
        /// `location,<factor>,...` CSV; repeat to merge several files.
        #[arg(long, required = true)]
        factors: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = ReduceArg::Last)]
        reduce: ReduceArg,
        #[arg(long)]
        exclude: Vec<String>,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Integrate the SEIR equations and write the daily trajectory.
    SimulateSeir(SeirArgs),
    /// Fit a curve family to every channel of a series.
    FitCurve {
        #[arg(long)]
        family: CurveFamily,
        #[arg(long)]
        data: PathBuf,
        /// Terms (exp, gauss) or degree (poly); chosen by hold-out error when absent.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        holdout: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReduceArg {
    Last,
    Mean,
    Sum,
}

impl From<ReduceArg> for Reduce {
    fn from(r: ReduceArg) -> Self {
        match r {
            ReduceArg::Last => Reduce::Last,
            ReduceArg::Mean => Reduce::Mean,
            ReduceArg::Sum => Reduce::Sum,
        }
    }
}

#[derive(Debug, Args)]
pub struct SeirArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub delta_e: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub population: f64,
    #[arg(long, default_value_t = 0.0)]
    pub exposed: f64,
    #[arg(long, default_value_t = 0.0)]
    pub infectious: f64,
    #[arg(long, default_value_t = 0.0)]
    pub recovered: f64,
    #[arg(long)]
    pub days: u32,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value = "out")]
    pub output: PathBuf,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(path)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

#[derive(Serialize)]
struct DivergenceReport<'a> {
    error: String,
    epoch: usize,
    model: &'a str,
    seed: u64,
    config_digest: String,
}

fn train(config: &Path, flags: &DataFlags, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config, &flags.overrides())?;
    let exp = match experiment::run(&cfg) {
        Ok(e) => e,
        Err(e @ Error::Divergence { epoch }) => {
            let report = DivergenceReport {
                error: e.to_string(),
                epoch,
                model: &cfg.model.kind,
                seed: cfg.seed(),
                config_digest: cfg.digest(),
            };
            write(out, "divergence.json", &json(&report)?)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    write(out, "metrics.json", &json(&exp.report)?)?;
    write(out, "checkpoint.json", &json(&exp.checkpoint)?)?;
    write(out, "loss_history.csv", &exp.loss_csv)?;
    write(out, "test_predictions.csv", &exp.test_predictions_csv)?;
    println!(
        "{}: train rmse {:.6} test rmse {:.6} ({} epochs) -> {}",
        exp.report.name,
        exp.report.train_rmse,
        exp.report.test_rmse,
        exp.report.epochs,
        out.display()
    );
    Ok(())
}

fn predict(checkpoint: &Path, horizon: usize, out: &Path) -> Result<()> {
    let cp = Checkpoint::load(checkpoint)?;
    let path = write(out, "predictions.csv", &cp.predictions_csv(horizon)?)?;
    println!("{horizon} days of {} predictions -> {}", cp.kind, path.display());
    Ok(())
}

fn evaluate(checkpoint: &Path, data: Option<&Path>, horizon: Option<usize>, out: &Path) -> Result<()> {
    let cp = Checkpoint::load(checkpoint)?;
    let mut cfg = cp.config.clone();
    if let Some(d) = data {
        cfg.data.series = d.into();
    }
    let observed = experiment::prepare(&cfg)?.series;
    let ev = experiment::evaluate(&cp, &observed, horizon)?;
    write(out, "evaluation.json", &json(&ev)?)?;
    println!("{}: rmse {:.6} over {} .. {}", ev.model, ev.rmse, ev.start, ev.end);
    Ok(())
}

fn compare_cmd(configs: &[PathBuf], flags: &DataFlags, out: &Path) -> Result<()> {
    let cfgs = configs.iter().map(|p| ExperimentConfig::load(p, &flags.overrides())).collect::<Result<Vec<_>>>()?;
    let exps = compare::run_all(&cfgs)?;
    let reports: Vec<_> = exps.iter().map(|e| e.report.clone()).collect();
    for (i, r) in reports.iter().enumerate() {
        write(out, &format!("metrics_{}_{}.json", i + 1, r.name), &json(r)?)?;
    }
    write(out, "compare.csv", &compare::table_csv(&reports))?;
    let text = compare::table_text(&reports);
    write(out, "compare.txt", &text)?;
    print!("{text}");
    Ok(())
}

/// Joins factor files column-wise; all must list the same locations.
fn merge_factors(tables: Vec<FactorTable>) -> Result<FactorTable> {
    let mut it = tables.into_iter();
    let mut merged = it.next().ok_or_else(|| Error::InvalidInput("no factor files".into()))?;
    for t in it {
        let mut sorted_a = merged.locations.clone();
        let mut sorted_b = t.locations.clone();
        sorted_a.sort();
        sorted_b.sort();
        if sorted_a != sorted_b {
            return Err(Error::InvalidInput("factor files list different locations".into()));
        }
        for (name, vals) in t.names.into_iter().zip(t.values) {
            let aligned = merged
                .locations
                .iter()
                .map(|l| vals[t.locations.iter().position(|x| x == l).expect("same location set")])
                .collect();
            merged.names.push(name);
            merged.values.push(aligned);
        }
    }
    Ok(merged)
}

pub fn correlate_csv(factor_paths: &[PathBuf], data: &Path, opts: &CorrelateOptions) -> Result<String> {
    let tables = factor_paths.iter().map(|p| load_factors(p)).collect::<Result<Vec<_>>>()?;
    let factors = merge_factors(tables)?;
    let series = load_timeseries(data)?;
    Ok(correlate(&factors, &series, opts)?.to_csv())
}

fn seir(a: &SeirArgs) -> Result<()> {
    let params = SeirParams { beta: a.beta, delta_e: a.delta_e, gamma: a.gamma, population: a.population };
    let s = a.population - a.exposed - a.infectious - a.recovered;
    if s < 0.0 || a.exposed < 0.0 || a.infectious < 0.0 || a.recovered < 0.0 {
        return Err(Error::InvalidInput(
            "initial compartments must be non-negative and sum to at most the population".into(),
        ));
    }
    let initial = SeirState { s, e: a.exposed, i: a.infectious, r: a.recovered, t: 0.0 };
    let traj = seir_integrate(&initial, &params, a.days as f64, a.dt)?;
    let path = write(&a.output, "trajectory.csv", &trajectory_csv(&traj))?;
    println!("{} days -> {}", a.days, path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ChannelFit {
    pub location: String,
    pub target: String,
    pub fit: CurveFit,
}

#[derive(Debug, Serialize)]
pub struct CurveDocument {
    pub family: CurveFamily,
    pub data: PathBuf,
    pub fits: Vec<ChannelFit>,
}

pub fn fit_curve(
    family: CurveFamily,
    data: &Path,
    k: Option<usize>,
    holdout: Option<usize>,
    seed: u64,
) -> Result<CurveDocument> {
    let series = load_timeseries(data)?;
    let kind = match family {
        CurveFamily::Exponential => "exp",
        CurveFamily::Gaussian => "gauss",
        CurveFamily::Polynomial => "poly",
    };
    let spec = ModelSpec { k, holdout, ..ModelSpec::new(kind) };
    let mut model = ForecasterRegistry::default().build(&spec, seed)?;
    model.fit(&FitContext {
        train: series.values(),
        spatial: &SpatialFeatureSet::empty(series.n()),
        optimizer: &OptimizerConfig::default(),
        train_config: &TrainConfig::new(1, 1, seed),
    })?;
    let fitted: CurveForecaster = serde_json::from_value(model.state()?)?;
    let mut fits = fitted.fits().iter().cloned();
    let mut out = Vec::with_capacity(series.n() * series.d());
    for loc in series.locations() {
        for target in series.targets() {
            out.push(ChannelFit {
                location: loc.clone(),
                target: target.clone(),
                fit: fits.next().expect("one fit per channel"),
            });
        }
    }
    Ok(CurveDocument { family, data: data.into(), fits: out })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, flags, output } => train(&config, &flags, &output),
        Command::Predict { checkpoint, horizon, output } => predict(&checkpoint, horizon as usize, &output),
        Command::Evaluate { checkpoint, data, horizon, output } => {
            evaluate(&checkpoint, data.as_deref(), horizon.map(|h| h as usize), &output)
        }
        Command::Compare { configs, flags, output } => compare_cmd(&configs, &flags, &output),
        Command::Correlate { factors, data, reduce, exclude, output } => {
            let opts = CorrelateOptions { reduce: reduce.into(), exclude };
            let csv = correlate_csv(&factors, &data, &opts)?;
            write(&output, "correlation.csv", &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::SimulateSeir(a) => seir(&a),
        Command::FitCurve { family, data, k, holdout, seed, output } => {
            let doc = fit_curve(family, &data, k, holdout, seed)?;
            let path = write(&output, "curve_fit.json", &json(&doc)?)?;
            println!("{} channel fits -> {}", doc.fits.len(), path.display());
            Ok(())
        }
    }
}
