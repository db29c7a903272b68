//! Train/test pipeline shared by `train`, `evaluate` and `compare`.

use std::path::Path;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use stnn_core::data::{
    derive_active, load_spatial_excluding, load_timeseries, rows_to_csv, split, Normalizer, TimeSeries,
};
use stnn_core::forecast::{FitContext, Forecaster, ForecasterRegistry, Scaling};
use stnn_core::linalg::rmse;
use stnn_core::{Error, Matrix, Result, SpatialFeatureSet};

use crate::config::ExperimentConfig;

/// Series and spatial matrices after every configured transform.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: TimeSeries,
    pub spatial: SpatialFeatureSet,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let mut series = load_timeseries(&cfg.data.series)?;
    if !cfg.data.exclude.is_empty() {
        series = series.without_locations(&cfg.data.exclude)?;
    }
    if cfg.data.active {
        series = derive_active(&series)?.0;
    }
    if cfg.data.aggregate {
        series = series.aggregate();
    }
    let spatial = if cfg.data.spatial.is_empty() {
        SpatialFeatureSet::empty(series.n())
    } else {
        load_spatial_excluding(&cfg.data.spatial, series.locations(), &cfg.data.exclude)?
    };
    Ok(Prepared { series, spatial })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMetrics {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub train_days: usize,
    pub test_days: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub epochs: usize,
}

/// Outcome of one experiment. RMSEs are on the original data scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub model: String,
    /// Pooled over all periods.
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Summed over periods.
    pub epochs: usize,
    pub wall_time_seconds: f64,
    pub seed: u64,
    pub config_digest: String,
    pub periods: Vec<PeriodMetrics>,
}

/// Everything needed to forecast past the training data without the config's files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub kind: String,
    pub locations: Vec<String>,
    pub targets: Vec<String>,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub normalizer: Option<Normalizer>,
    pub model: serde_json::Value,
}

pub const CHECKPOINT_FORMAT: &str = "stnn-checkpoint/1";

struct PeriodRun {
    metrics: PeriodMetrics,
    model: Box<dyn Forecaster>,
    normalizer: Option<Normalizer>,
    train: TimeSeries,
    test_pred: Vec<Matrix>,
    test: TimeSeries,
    loss_history: Vec<f64>,
    train_count: usize,
    test_count: usize,
}

pub struct Experiment {
    pub report: MetricsReport,
    /// Model of the last period.
    pub checkpoint: Checkpoint,
    /// `period,epoch,loss` rows.
    pub loss_csv: String,
    /// De-normalized rollout over every test span, in the input schema.
    pub test_predictions_csv: String,
}

fn scale_back(nz: &Option<Normalizer>, v: Vec<Matrix>) -> Result<Vec<Matrix>> {
    match nz {
        Some(nz) => nz.denormalize(&v),
        None => Ok(v),
    }
}

fn run_period(cfg: &ExperimentConfig, slice: TimeSeries, spatial: &SpatialFeatureSet) -> Result<PeriodRun> {
    let (train, test) = split(&slice, cfg.data.split_ratio)?;
    let mut model = ForecasterRegistry::default().build(&cfg.model, cfg.seed())?;
    let normalizer = match model.scaling() {
        Scaling::Normalized(act) => Some(Normalizer::fit(&train, cfg.data.normalization, act)?),
        Scaling::Raw => None,
    };
    let train_values = match &normalizer {
        Some(nz) => nz.normalize(train.values())?,
        None => train.values().to_vec(),
    };
    let summary = model.fit(&FitContext {
        train: &train_values,
        spatial,
        optimizer: &cfg.optimizer,
        train_config: &cfg.train_config(),
    })?;
    let fitted = model.fitted()?;
    let fit_values = scale_back(&normalizer, fitted.values)?;
    let train_rmse = rmse(&fit_values, &train.values()[fitted.start..])?;
    let test_pred = scale_back(&normalizer, model.forecast(test.m())?)?;
    let test_rmse = rmse(&test_pred, test.values())?;
    let cells = train.n() * train.d();
    Ok(PeriodRun {
        metrics: PeriodMetrics {
            start: slice.dates()[0],
            end: *slice.dates().last().expect("non-empty period"),
            train_days: train.m(),
            test_days: test.m(),
            train_rmse,
            test_rmse,
            epochs: summary.epochs,
        },
        model,
        normalizer,
        train_count: fit_values.len() * cells,
        test_count: test.m() * cells,
        train,
        test_pred,
        test,
        loss_history: summary.loss_history,
    })
}

fn pooled(parts: impl Iterator<Item = (f64, usize)>) -> f64 {
    let (sse, count) = parts.fold((0.0, 0), |(s, c), (r, n)| (s + r * r * n as f64, c + n));
    (sse / count as f64).sqrt()
}

/// Validates, trains every period and collects the outputs.
pub fn run(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let started = Instant::now();
    let prepared = prepare(cfg)?;
    let ranges = cfg.data.periods.ranges(prepared.series.dates())?;
    let mut runs = Vec::with_capacity(ranges.len());
    for (i, r) in ranges.into_iter().enumerate() {
        let slice = prepared.series.slice(r)?;
        log::info!("period {} ({} .. {})", i + 1, slice.dates()[0], slice.dates()[slice.m() - 1]);
        runs.push(run_period(cfg, slice, &prepared.spatial)?);
    }

    let mut loss_csv = String::from("period,epoch,loss\n");
    let mut pred_dates = Vec::new();
    let mut pred_values = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        for (e, l) in r.loss_history.iter().enumerate() {
            loss_csv.push_str(&format!("{},{},{}\n", i + 1, e + 1, l));
        }
        pred_dates.extend_from_slice(r.test.dates());
        pred_values.extend(r.test_pred.iter().cloned());
    }
    let test_predictions_csv = rows_to_csv(&prepared.series.csv_header(), &pred_dates, &pred_values);

    let last = runs.last().expect("at least one period");
    let digest = cfg.digest();
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        config: cfg.clone(),
        config_digest: digest.clone(),
        kind: last.model.kind().into(),
        locations: last.train.locations().to_vec(),
        targets: last.train.targets().to_vec(),
        train_start: last.train.dates()[0],
        train_end: *last.train.dates().last().expect("non-empty train split"),
        normalizer: last.normalizer.clone(),
        model: last.model.state()?,
    };
    let report = MetricsReport {
        name: cfg.label(),
        model: cfg.model.kind.to_ascii_lowercase(),
        train_rmse: pooled(runs.iter().map(|r| (r.metrics.train_rmse, r.train_count))),
        test_rmse: pooled(runs.iter().map(|r| (r.metrics.test_rmse, r.test_count))),
        epochs: runs.iter().map(|r| r.metrics.epochs).sum(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        seed: cfg.seed(),
        config_digest: digest,
        periods: runs.iter().map(|r| r.metrics.clone()).collect(),
    };
    Ok(Experiment { report, checkpoint, loss_csv, test_predictions_csv })
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: not a checkpoint: {e}", path.display())))?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported checkpoint format '{}'",
                path.display(),
                cp.format
            )));
        }
        Ok(cp)
    }

    pub fn forecaster(&self) -> Result<Box<dyn Forecaster>> {
        ForecasterRegistry::default().restore(&self.kind, self.model.clone())
    }

    /// Dates and de-normalized values of the `horizon` days after training.
    pub fn predict(&self, horizon: usize) -> Result<(Vec<NaiveDate>, Vec<Matrix>)> {
        let values = scale_back(&self.normalizer, self.forecaster()?.forecast(horizon)?)?;
        let dates = (1..=horizon as u64)
            .map(|k| self.train_end.checked_add_days(Days::new(k)).expect("date in range"))
            .collect();
        Ok((dates, values))
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("date");
        for l in &self.locations {
            for t in &self.targets {
                h.push_str(&format!(",{l}:{t}"));
            }
        }
        h
    }

    pub fn predictions_csv(&self, horizon: usize) -> Result<String> {
        let (dates, values) = self.predict(horizon)?;
        Ok(rows_to_csv(&self.csv_header(), &dates, &values))
    }
}

/// Test RMSE of a checkpoint against observed days following its training span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model: String,
    pub config_digest: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub horizon: usize,
    pub rmse: f64,
    /// Per target, pooled over locations.
    pub target_rmse: Vec<(String, f64)>,
}

pub fn evaluate(cp: &Checkpoint, observed: &TimeSeries, horizon: Option<usize>) -> Result<Evaluation> {
    if observed.locations() != cp.locations.as_slice() || observed.targets() != cp.targets.as_slice() {
        return Err(Error::InvalidInput(
            "evaluation data has different locations or targets than the checkpoint".into(),
        ));
    }
    let first = observed
        .dates()
        .iter()
        .position(|d| *d > cp.train_end)
        .ok_or_else(|| Error::InvalidInput(format!("no observations after the training end {}", cp.train_end)))?;
    if observed.dates()[first] != cp.train_end + Days::new(1) {
        return Err(Error::InvalidInput(format!("observations must continue directly after {}", cp.train_end)));
    }
    let available = observed.m() - first;
    let h = horizon.unwrap_or(available);
    if h < 1 || h > available {
        return Err(Error::InvalidInput(format!("horizon {h} outside the {available} observed days after training")));
    }
    let (_, pred) = cp.predict(h)?;
    let actual = &observed.values()[first..first + h];
    let target_rmse = (0..cp.targets.len())
        .map(|k| {
            let col = |v: &[Matrix]| -> Vec<Matrix> {
                v.iter()
                    .map(|x| Matrix::from_vec(x.rows(), 1, (0..x.rows()).map(|j| x[(j, k)]).collect()).unwrap())
                    .collect()
            };
            Ok((cp.targets[k].clone(), rmse(&col(&pred), &col(actual))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        model: cp.kind.clone(),
        config_digest: cp.config_digest.clone(),
        start: observed.dates()[first],
        end: observed.dates()[first + h - 1],
        horizon: h,
        rmse: rmse(&pred, actual)?,
        target_rmse,
    })
}
