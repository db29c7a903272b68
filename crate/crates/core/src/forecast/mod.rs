//! Uniform interface over every forecasting model, selected by kind name.
//!
//! A [`Forecaster`] is fitted on a training prefix and then asked for in-sample
//! fits and an out-of-sample rollout. Models that need inputs inside an
//! activation range report [`Scaling::Normalized`]; the caller handles the
//! min-max transform so every model sees data in the scale it expects.

mod models;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{BpnnConfig, SeirFitOptions};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::Activation;
use crate::optim::{OptimizerConfig, TrainConfig};
use crate::stnn::SpatialFeatureSet;

pub use models::{BpnnForecaster, CurveForecaster, GruForecaster, SeirForecaster, StnnForecaster};

/// Which data scale a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// Min-max normalized into the range of this output activation.
    Normalized(Activation),
    /// Raw counts.
    Raw,
}

/// Everything a model may need while fitting.
pub struct FitContext<'a> {
    /// Training observations, one `n × d` matrix per step.
    pub train: &'a [Matrix],
    pub spatial: &'a SpatialFeatureSet,
    pub optimizer: &'a OptimizerConfig,
    pub train_config: &'a TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitSummary {
    pub epochs: usize,
    /// Per-epoch training loss, when the model is trained iteratively.
    pub loss_history: Vec<f64>,
}

/// In-sample predictions for training steps `start..`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub start: usize,
    pub values: Vec<Matrix>,
}

pub trait Forecaster: Send {
    fn kind(&self) -> &'static str;

    fn scaling(&self) -> Scaling;

    fn fit(&mut self, ctx: &FitContext<'_>) -> Result<FitSummary>;

    fn fitted(&self) -> Result<Fitted>;

    /// The next `horizon` steps after the end of the training data.
    fn forecast(&self, horizon: usize) -> Result<Vec<Matrix>>;

    /// Serialized fitted state, restorable through the registry.
    fn state(&self) -> Result<serde_json::Value>;
}

/// Model hyperparameters. Fields irrelevant to the chosen kind are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    /// STNN hidden-state width per location.
    #[serde(default = "default_l")]
    pub l: usize,
    #[serde(default)]
    pub a_hidden: Vec<usize>,
    #[serde(default = "default_b_hidden")]
    pub b_hidden: Vec<usize>,
    #[serde(default)]
    pub c_hidden: Vec<usize>,
    #[serde(default = "default_c_out")]
    pub c_out: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Per-network overrides of `activation` for the STNN decoder, transition and input networks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_a: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_b: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_c: Option<Activation>,
    #[serde(default)]
    pub reg_l2: f64,
    /// GRU hidden width.
    #[serde(default = "default_gru_hidden")]
    pub hidden: usize,
    /// GRU readout hidden width.
    #[serde(default = "default_gru_hidden")]
    pub readout_hidden: usize,
    /// GRU window length.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Term count (exp/gauss) or degree (poly). When absent: exp uses 2,
    /// gauss picks 1..=3 and poly picks 1..=6 by hold-out error.
    #[serde(default)]
    pub k: Option<usize>,
    /// Trailing training points held out when selecting `k`.
    #[serde(default)]
    pub holdout: Option<usize>,
    #[serde(default)]
    pub bpnn: BpnnConfig,
    /// SEIR population, one value for all locations or one per location.
    #[serde(default)]
    pub population: Vec<f64>,
    /// SEIR re-estimation window in days; the whole training span when absent.
    #[serde(default)]
    pub seir_window: Option<usize>,
    #[serde(default)]
    pub seir: SeirFitOptions,
}

fn default_l() -> usize {
    8
}
fn default_b_hidden() -> Vec<usize> {
    vec![16]
}
fn default_c_out() -> usize {
    4
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_gru_hidden() -> usize {
    10
}
fn default_window() -> usize {
    5
}

impl ModelSpec {
    /// Defaults for every field except the kind.
    pub fn new(kind: &str) -> Self {
        ModelSpec {
            kind: kind.into(),
            l: default_l(),
            a_hidden: Vec::new(),
            b_hidden: default_b_hidden(),
            c_hidden: Vec::new(),
            c_out: default_c_out(),
            activation: default_activation(),
            activation_a: None,
            activation_b: None,
            activation_c: None,
            reg_l2: 0.0,
            hidden: default_gru_hidden(),
            readout_hidden: default_gru_hidden(),
            window: default_window(),
            k: None,
            holdout: None,
            bpnn: BpnnConfig::default(),
            population: Vec::new(),
            seir_window: None,
            seir: SeirFitOptions::default(),
        }
    }
}

type Build = fn(&ModelSpec, u64) -> Result<Box<dyn Forecaster>>;
type Restore = fn(serde_json::Value) -> Result<Box<dyn Forecaster>>;

struct Entry {
    build: Build,
    restore: Restore,
    description: &'static str,
}

/// Name → model constructor table.
pub struct ForecasterRegistry {
    entries: BTreeMap<&'static str, Entry>,
}

fn restore_as<T>(v: serde_json::Value) -> Result<Box<dyn Forecaster>>
where
    T: Forecaster + serde::de::DeserializeOwned + 'static,
{
    Ok(Box::new(serde_json::from_value::<T>(v)?))
}

impl Default for ForecasterRegistry {
    fn default() -> Self {
        let mut r = ForecasterRegistry { entries: BTreeMap::new() };
        r.register(
            "stnn",
            "STNN, superposed spatial coupling",
            StnnForecaster::build_classic,
            restore_as::<StnnForecaster>,
        );
        r.register(
            "stnn-a",
            "STNN, augmented spatial coupling",
            StnnForecaster::build_augmented,
            restore_as::<StnnForecaster>,
        );
        r.register("stnn-i", "STNN with input gate", StnnForecaster::build_input_gate, restore_as::<StnnForecaster>);
        r.register("bpnn", "dense network regressing on time", BpnnForecaster::build, restore_as::<BpnnForecaster>);
        r.register("gru", "GRU over a sliding window", GruForecaster::build, restore_as::<GruForecaster>);
        r.register("exp", "sum of exponentials", CurveForecaster::build_exponential, restore_as::<CurveForecaster>);
        r.register("gauss", "sum of gaussians", CurveForecaster::build_gaussian, restore_as::<CurveForecaster>);
        r.register("poly", "polynomial", CurveForecaster::build_polynomial, restore_as::<CurveForecaster>);
        r.register("seir", "SEIR compartments with fitted rates", SeirForecaster::build, restore_as::<SeirForecaster>);
        r
    }
}

impl ForecasterRegistry {
    pub fn register(&mut self, kind: &'static str, description: &'static str, build: Build, restore: Restore) {
        self.entries.insert(kind, Entry { build, restore, description });
    }

    pub fn kinds(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.iter().map(|(k, e)| (*k, e.description))
    }

    fn entry(&self, kind: &str) -> Result<&Entry> {
        self.entries.get(kind.to_ascii_lowercase().as_str()).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown model kind '{kind}' (known: {})",
                self.entries.keys().copied().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.entry(kind).is_ok()
    }

    pub fn build(&self, spec: &ModelSpec, seed: u64) -> Result<Box<dyn Forecaster>> {
        (self.entry(&spec.kind)?.build)(spec, seed)
    }

    pub fn restore(&self, kind: &str, state: serde_json::Value) -> Result<Box<dyn Forecaster>> {
        let model = (self.entry(kind)?.restore)(state)?;
        if model.kind() != kind.to_ascii_lowercase() {
            return Err(Error::InvalidInput(format!("checkpoint holds a '{}' model, not '{kind}'", model.kind())));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_every_kind() {
        let reg = ForecasterRegistry::default();
        let kinds: Vec<_> = reg.kinds().map(|(k, _)| k).collect();
        assert_eq!(kinds, ["bpnn", "exp", "gauss", "gru", "poly", "seir", "stnn", "stnn-a", "stnn-i"]);
        for k in kinds {
            assert_eq!(reg.build(&ModelSpec::new(k), 0).unwrap().kind(), k);
        }
        assert!(matches!(reg.build(&ModelSpec::new("lstm"), 0), Err(Error::InvalidConfig(_))));
    }
}
