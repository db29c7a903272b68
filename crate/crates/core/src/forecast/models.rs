use serde::{Deserialize, Serialize};

use super::{FitContext, FitSummary, Fitted, Forecaster, ModelSpec, Scaling};
use crate::baselines::{
    bpnn_predict, bpnn_time, curve_eval, fit_bpnn, fit_gru, fit_select, seir_fit, BpnnConfig, CurveFamily, CurveFit,
    GruPredictor, SeirFitOptions, SeirWindowFit,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{Activation, DenseNetwork};
use crate::optim::OptimizerRegistry;
use crate::stnn::{fit_stnn, SpatialFeatureSet, StnnConfig, StnnModel, StnnVariant};

fn not_fitted(kind: &str) -> Error {
    Error::InvalidInput(format!("{kind} model has not been fitted"))
}

fn check_train(train: &[Matrix]) -> Result<(usize, usize)> {
    let first = train.first().ok_or_else(|| Error::InvalidInput("empty training series".into()))?;
    Ok(first.shape())
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon < 1 {
        return Err(Error::InvalidInput("forecast horizon must be at least 1".into()));
    }
    Ok(())
}

/// `train[t].row(loc)` for every `t`.
fn location_rows(train: &[Matrix], loc: usize) -> Vec<Vec<f64>> {
    train.iter().map(|x| x.row(loc).to_vec()).collect()
}

/// Reassembles per-location row sequences into per-step `n × d` matrices.
fn assemble(per_loc: &[Vec<Vec<f64>>]) -> Result<Vec<Matrix>> {
    let steps = per_loc.first().map_or(0, Vec::len);
    (0..steps).map(|t| Matrix::from_rows(&per_loc.iter().map(|s| s[t].clone()).collect::<Vec<_>>())).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StnnForecaster {
    variant: StnnVariant,
    spec: ModelSpec,
    seed: u64,
    model: Option<StnnModel>,
    spatial: Option<SpatialFeatureSet>,
    /// The last two training observations, consumed by the input-gate rollout.
    recent: Vec<Matrix>,
}

impl StnnForecaster {
    pub fn new(variant: StnnVariant, spec: &ModelSpec, seed: u64) -> Self {
        StnnForecaster { variant, spec: spec.clone(), seed, model: None, spatial: None, recent: Vec::new() }
    }

    pub(super) fn build_classic(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Ok(Box::new(Self::new(StnnVariant::Classic, spec, seed)))
    }

    pub(super) fn build_augmented(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Ok(Box::new(Self::new(StnnVariant::Augmented, spec, seed)))
    }

    pub(super) fn build_input_gate(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Ok(Box::new(Self::new(StnnVariant::InputGate, spec, seed)))
    }

    pub fn model(&self) -> Option<&StnnModel> {
        self.model.as_ref()
    }

    fn config(&self, n: usize, d: usize, p: usize) -> StnnConfig {
        let s = &self.spec;
        StnnConfig {
            a_hidden: s.a_hidden.clone(),
            b_hidden: s.b_hidden.clone(),
            c_hidden: s.c_hidden.clone(),
            c_out: s.c_out,
            activation_a: s.activation_a.unwrap_or(s.activation),
            activation_b: s.activation_b.unwrap_or(s.activation),
            activation_c: s.activation_c.unwrap_or(s.activation),
            reg_l2: s.reg_l2,
            ..StnnConfig::new(n, d, p, s.l, self.variant, self.seed)
        }
    }
}

impl Forecaster for StnnForecaster {
    fn kind(&self) -> &'static str {
        match self.variant {
            StnnVariant::Classic => "stnn",
            StnnVariant::Augmented => "stnn-a",
            StnnVariant::InputGate => "stnn-i",
        }
    }

    fn scaling(&self) -> Scaling {
        // Observations live in the decoder's output range.
        Scaling::Normalized(self.spec.activation_a.unwrap_or(self.spec.activation))
    }

    fn fit(&mut self, ctx: &FitContext<'_>) -> Result<FitSummary> {
        let (n, d) = check_train(ctx.train)?;
        let config = self.config(n, d, ctx.spatial.p());
        let model = StnnModel::new(config, ctx.train.len())?;
        let mut optimizer = OptimizerRegistry::default().build(ctx.optimizer)?;
        let (model, report) =
            fit_stnn(model, ctx.train, ctx.spatial, optimizer.as_mut(), &ctx.optimizer.schedule, ctx.train_config)?;
        self.model = Some(model);
        self.spatial = Some(ctx.spatial.clone());
        self.recent = ctx.train[ctx.train.len().saturating_sub(2)..].to_vec();
        Ok(FitSummary { epochs: report.epochs, loss_history: report.loss_history })
    }

    fn fitted(&self) -> Result<Fitted> {
        let model = self.model.as_ref().ok_or_else(|| not_fitted(self.kind()))?;
        Ok(Fitted { start: 0, values: model.fitted()? })
    }

    fn forecast(&self, horizon: usize) -> Result<Vec<Matrix>> {
        check_horizon(horizon)?;
        let model = self.model.as_ref().ok_or_else(|| not_fitted(self.kind()))?;
        let w = self.spatial.as_ref().ok_or_else(|| not_fitted(self.kind()))?;
        model.predict(w, horizon, &self.recent)
    }

    fn state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// One time-regression network per location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpnnForecaster {
    config: BpnnConfig,
    activation: Activation,
    seed: u64,
    nets: Vec<DenseNetwork>,
    m_train: usize,
}

impl BpnnForecaster {
    pub(super) fn build(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Ok(Box::new(BpnnForecaster {
            config: spec.bpnn.clone(),
            activation: spec.activation,
            seed,
            nets: Vec::new(),
            m_train: 0,
        }))
    }

    fn predict_at(&self, t: usize) -> Result<Matrix> {
        let x = bpnn_time(t, self.m_train);
        let rows = self.nets.iter().map(|net| bpnn_predict(net, x)).collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }
}

impl Forecaster for BpnnForecaster {
    fn kind(&self) -> &'static str {
        "bpnn"
    }

    fn scaling(&self) -> Scaling {
        Scaling::Normalized(self.activation)
    }

    fn fit(&mut self, ctx: &FitContext<'_>) -> Result<FitSummary> {
        let (n, d) = check_train(ctx.train)?;
        let m = ctx.train.len();
        let mut nets = Vec::with_capacity(n);
        let mut epochs = 0;
        for j in 0..n {
            let rows = location_rows(ctx.train, j);
            let targets = Matrix::from_vec(m, d, rows.concat())?;
            let fit = fit_bpnn(&targets, self.activation, &self.config, self.seed)?;
            epochs = fit.epochs;
            nets.push(fit.net);
        }
        self.nets = nets;
        self.m_train = m;
        Ok(FitSummary { epochs, loss_history: Vec::new() })
    }

    fn fitted(&self) -> Result<Fitted> {
        if self.nets.is_empty() {
            return Err(not_fitted("bpnn"));
        }
        Ok(Fitted { start: 0, values: (0..self.m_train).map(|t| self.predict_at(t)).collect::<Result<_>>()? })
    }

    fn forecast(&self, horizon: usize) -> Result<Vec<Matrix>> {
        check_horizon(horizon)?;
        if self.nets.is_empty() {
            return Err(not_fitted("bpnn"));
        }
        (self.m_train..self.m_train + horizon).map(|t| self.predict_at(t)).collect()
    }

    fn state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// One GRU predictor per location, each over that location's `d` targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruForecaster {
    hidden: usize,
    readout_hidden: usize,
    window: usize,
    activation: Activation,
    seed: u64,
    predictors: Vec<GruPredictor>,
    /// Training rows per location, kept for in-sample fits and the rollout seed window.
    train: Vec<Vec<Vec<f64>>>,
}

impl GruForecaster {
    pub(super) fn build(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        if spec.window == 0 || spec.hidden == 0 || spec.readout_hidden == 0 {
            return Err(Error::InvalidConfig("gru window and widths must be positive".into()));
        }
        Ok(Box::new(GruForecaster {
            hidden: spec.hidden,
            readout_hidden: spec.readout_hidden,
            window: spec.window,
            activation: spec.activation,
            seed,
            predictors: Vec::new(),
            train: Vec::new(),
        }))
    }
}

impl Forecaster for GruForecaster {
    fn kind(&self) -> &'static str {
        "gru"
    }

    fn scaling(&self) -> Scaling {
        Scaling::Normalized(self.activation)
    }

    fn fit(&mut self, ctx: &FitContext<'_>) -> Result<FitSummary> {
        let (n, d) = check_train(ctx.train)?;
        if ctx.train.len() <= self.window {
            return Err(Error::InvalidInput(format!(
                "gru window {} needs more than {} training steps",
                self.window,
                ctx.train.len()
            )));
        }
        let registry = OptimizerRegistry::default();
        let mut predictors = Vec::with_capacity(n);
        let mut train = Vec::with_capacity(n);
        let mut summary = FitSummary::default();
        for j in 0..n {
            let rows = location_rows(ctx.train, j);
            let p = GruPredictor::new(
                d,
                self.hidden,
                self.readout_hidden,
                self.window,
                self.activation,
                self.seed.wrapping_add(j as u64),
            )?;
            let mut opt = registry.build(ctx.optimizer)?;
            let (p, report) =
                fit_gru(p, std::slice::from_ref(&rows), opt.as_mut(), &ctx.optimizer.schedule, ctx.train_config)?;
            summary.epochs = summary.epochs.max(report.epochs);
            if summary.loss_history.len() < report.loss_history.len() {
                summary.loss_history.resize(report.loss_history.len(), 0.0);
            }
            for (acc, l) in summary.loss_history.iter_mut().zip(&report.loss_history) {
                *acc += l / n as f64;
            }
            predictors.push(p);
            train.push(rows);
        }
        self.predictors = predictors;
        self.train = train;
        Ok(summary)
    }

    fn fitted(&self) -> Result<Fitted> {
        if self.predictors.is_empty() {
            return Err(not_fitted("gru"));
        }
        let k = self.window;
        let mut per_loc = Vec::with_capacity(self.predictors.len());
        for (p, rows) in self.predictors.iter().zip(&self.train) {
            let mut preds = Vec::with_capacity(rows.len() - k);
            for end in k..rows.len() {
                let w: Vec<Matrix> = rows[end - k..end].iter().map(|v| Matrix::row_vector(v)).collect();
                preds.push(p.forward(&w)?.into_vec());
            }
            per_loc.push(preds);
        }
        Ok(Fitted { start: k, values: assemble(&per_loc)? })
    }

    fn forecast(&self, horizon: usize) -> Result<Vec<Matrix>> {
        check_horizon(horizon)?;
        if self.predictors.is_empty() {
            return Err(not_fitted("gru"));
        }
        let per_loc = self
            .predictors
            .iter()
            .zip(&self.train)
            .map(|(p, rows)| p.forecast(rows, horizon))
            .collect::<Result<Vec<_>>>()?;
        assemble(&per_loc)
    }

    fn state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// One curve per `(location, target)` channel against the day index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveForecaster {
    family: CurveFamily,
    k: Option<usize>,
    holdout: Option<usize>,
    seed: u64,
    /// Row-major `(location, target)` order.
    fits: Vec<CurveFit>,
    n: usize,
    d: usize,
    m_train: usize,
}

impl CurveForecaster {
    fn build_family(family: CurveFamily, spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        if spec.k == Some(0) && family != CurveFamily::Polynomial {
            return Err(Error::InvalidConfig("curve term count k must be at least 1".into()));
        }
        Ok(Box::new(CurveForecaster {
            family,
            k: spec.k,
            holdout: spec.holdout,
            seed,
            fits: Vec::new(),
            n: 0,
            d: 0,
            m_train: 0,
        }))
    }

    pub(super) fn build_exponential(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Self::build_family(CurveFamily::Exponential, spec, seed)
    }

    pub(super) fn build_gaussian(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Self::build_family(CurveFamily::Gaussian, spec, seed)
    }

    pub(super) fn build_polynomial(spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        Self::build_family(CurveFamily::Polynomial, spec, seed)
    }

    pub fn fits(&self) -> &[CurveFit] {
        &self.fits
    }

    fn candidates(&self) -> Vec<usize> {
        match (self.k, self.family) {
            (Some(k), _) => vec![k],
            (None, CurveFamily::Exponential) => vec![2],
            (None, CurveFamily::Gaussian) => vec![1, 2, 3],
            (None, CurveFamily::Polynomial) => (1..=6).collect(),
        }
    }

    fn eval_at(&self, x: f64) -> Result<Matrix> {
        Matrix::from_vec(self.n, self.d, self.fits.iter().map(|f| curve_eval(f, x)).collect())
    }
}

impl Forecaster for CurveForecaster {
    fn kind(&self) -> &'static str {
        match self.family {
            CurveFamily::Exponential => "exp",
            CurveFamily::Gaussian => "gauss",
            CurveFamily::Polynomial => "poly",
        }
    }

    fn scaling(&self) -> Scaling {
        Scaling::Raw
    }

    fn fit(&mut self, ctx: &FitContext<'_>) -> Result<FitSummary> {
        let (n, d) = check_train(ctx.train)?;
        let m = ctx.train.len();
        let xs: Vec<f64> = (0..m).map(|t| t as f64).collect();
        let ks = self.candidates();
        let holdout = self.holdout.unwrap_or((m / 10).max(1));
        let mut fits = Vec::with_capacity(n * d);
        for j in 0..n {
            for k in 0..d {
                let ys: Vec<f64> = ctx.train.iter().map(|x| x[(j, k)]).collect();
                let fit = match fit_select(self.family, &xs, &ys, &ks, holdout, self.seed) {
                    Ok(f) => f,
                    Err(Error::NoConvergence { best }) => {
                        log::warn!(
                            "{} fit on channel ({j}, {k}) did not improve on any start; keeping best",
                            self.family.name()
                        );
                        *best
                    }
                    Err(e) => return Err(e),
                };
                fits.push(fit);
            }
        }
        self.fits = fits;
        self.n = n;
        self.d = d;
        self.m_train = m;
        Ok(FitSummary::default())
    }

    fn fitted(&self) -> Result<Fitted> {
        if self.fits.is_empty() {
            return Err(not_fitted(self.kind()));
        }
        Ok(Fitted { start: 0, values: (0..self.m_train).map(|t| self.eval_at(t as f64)).collect::<Result<_>>()? })
    }

    fn forecast(&self, horizon: usize) -> Result<Vec<Matrix>> {
        check_horizon(horizon)?;
        if self.fits.is_empty() {
            return Err(not_fitted(self.kind()));
        }
        (self.m_train..self.m_train + horizon).map(|t| self.eval_at(t as f64)).collect()
    }

    fn state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// Each `(location, target)` channel is read as an infectious count `I(t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeirForecaster {
    population: Vec<f64>,
    window: Option<usize>,
    options: SeirFitOptions,
    /// Per channel, row-major; `None` for an all-zero channel.
    fits: Vec<Option<Vec<SeirWindowFit>>>,
    n: usize,
    d: usize,
    m_train: usize,
}

impl SeirForecaster {
    pub(super) fn build(spec: &ModelSpec, _seed: u64) -> Result<Box<dyn Forecaster>> {
        if spec.population.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidConfig("seir population values must be positive".into()));
        }
        if spec.seir_window == Some(0) {
            return Err(Error::InvalidConfig("seir_window must be at least 1 day".into()));
        }
        Ok(Box::new(SeirForecaster {
            population: spec.population.clone(),
            window: spec.seir_window,
            options: spec.seir,
            fits: Vec::new(),
            n: 0,
            d: 0,
            m_train: 0,
        }))
    }

    fn windows(&self, m: usize) -> Vec<std::ops::Range<usize>> {
        let w = self.window.unwrap_or(m).min(m);
        let mut out: Vec<std::ops::Range<usize>> = (0..m).step_by(w).map(|s| s..(s + w).min(m)).collect();
        // A stub shorter than two days cannot inform three rates; fold it into its predecessor.
        if out.len() > 1 && out.last().is_some_and(|r| r.len() < 2) {
            let last = out.pop().expect("len > 1");
            out.last_mut().expect("len > 0").end = last.end;
        }
        out
    }

    fn population_for(&self, loc: usize) -> Result<f64> {
        match self.population.len() {
            0 => Err(Error::InvalidConfig("seir needs `population` (one value or one per location)".into())),
            1 => Ok(self.population[0]),
            len if len == self.n => Ok(self.population[loc]),
            len => Err(Error::InvalidConfig(format!("seir population lists {len} values for {} locations", self.n))),
        }
    }

    /// Simulated `I` for each channel on days `from..to` of the training calendar.
    fn simulate(&self, from: usize, to: usize) -> Result<Vec<Matrix>> {
        let mut out = vec![Matrix::zeros(self.n, self.d); to - from];
        for (c, fit) in self.fits.iter().enumerate() {
            let Some(windows) = fit else { continue };
            for (i, w) in windows.iter().enumerate() {
                // The last window also covers everything past the training span.
                let end = if i + 1 == windows.len() { to } else { w.end.min(to) };
                let start = w.start.max(from);
                if start >= end {
                    continue;
                }
                let traj = w.simulate_infectious(end - 1 - w.start, self.options.dt)?;
                for t in start..end {
                    out[t - from].as_mut_slice()[c] = traj[t - w.start];
                }
            }
        }
        Ok(out)
    }
}

impl Forecaster for SeirForecaster {
    fn kind(&self) -> &'static str {
        "seir"
    }

    fn scaling(&self) -> Scaling {
        Scaling::Raw
    }

    fn fit(&mut self, ctx: &FitContext<'_>) -> Result<FitSummary> {
        let (n, d) = check_train(ctx.train)?;
        self.n = n;
        self.d = d;
        let m = ctx.train.len();
        let windows = self.windows(m);
        let mut fits = Vec::with_capacity(n * d);
        for j in 0..n {
            let population = self.population_for(j)?;
            for k in 0..d {
                let obs: Vec<f64> = ctx.train.iter().map(|x| x[(j, k)]).collect();
                if obs.iter().all(|&v| v == 0.0) {
                    fits.push(None);
                    continue;
                }
                fits.push(Some(seir_fit(&obs, population, &windows, &self.options)?));
            }
        }
        self.fits = fits;
        self.m_train = m;
        Ok(FitSummary::default())
    }

    fn fitted(&self) -> Result<Fitted> {
        if self.fits.is_empty() {
            return Err(not_fitted("seir"));
        }
        Ok(Fitted { start: 0, values: self.simulate(0, self.m_train)? })
    }

    fn forecast(&self, horizon: usize) -> Result<Vec<Matrix>> {
        check_horizon(horizon)?;
        if self.fits.is_empty() {
            return Err(not_fitted("seir"));
        }
        self.simulate(self.m_train, self.m_train + horizon)
    }

    fn state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
