//! Gradient-based optimizers, the learning-rate schedule and the training loop.
//!
//! Every update rule implements [`Optimizer`] over flat parameter buffers and
//! is registered by name in an [`OptimizerRegistry`], so experiment configs
//! can pick one at runtime.

mod schedule;
mod steppers;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use schedule::{lr_at, LrSchedule};
pub use steppers::{
    adagrad_step, adam_step, rmsprop_step, sgd_step, AccumState, AdaGrad, Adam, AdamState, RmsProp, Sgd, ACCUM_EPS,
    ADAM_DELTA, ADAM_ETA, ADAM_RHO1, ADAM_RHO2, RMSPROP_DECAY,
};
pub use train::{train, Objective, TrainConfig, TrainReport};

/// A stateful parameter-update rule.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Applies one update with learning rate `lr`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()>;
}

/// Optimizer selection plus its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_schedule")]
    pub schedule: LrSchedule,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    #[serde(default = "default_rho2")]
    pub rho2: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_kind() -> String {
    "adam".into()
}
fn default_schedule() -> LrSchedule {
    LrSchedule::constant(ADAM_ETA)
}
fn default_rho1() -> f64 {
    ADAM_RHO1
}
fn default_rho2() -> f64 {
    ADAM_RHO2
}
fn default_delta() -> f64 {
    ADAM_DELTA
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: default_kind(),
            schedule: default_schedule(),
            rho1: ADAM_RHO1,
            rho2: ADAM_RHO2,
            delta: ADAM_DELTA,
        }
    }
}

impl OptimizerConfig {
    pub fn with_kind(kind: &str, schedule: LrSchedule) -> Self {
        OptimizerConfig { kind: kind.into(), schedule, ..Default::default() }
    }
}

type OptimizerCtor = fn(&OptimizerConfig) -> Box<dyn Optimizer>;

/// Name → constructor table for update rules.
pub struct OptimizerRegistry {
    entries: BTreeMap<&'static str, OptimizerCtor>,
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        let mut r = OptimizerRegistry { entries: BTreeMap::new() };
        r.register("sgd", |_| Box::new(Sgd));
        r.register("adam", |c| Box::new(Adam::new(c.rho1, c.rho2, c.delta)));
        r.register("adagrad", |_| Box::new(AdaGrad::default()));
        r.register("rmsprop", |_| Box::new(RmsProp::default()));
        r
    }
}

impl OptimizerRegistry {
    pub fn register(&mut self, name: &'static str, ctor: OptimizerCtor) {
        self.entries.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, config: &OptimizerConfig) -> Result<Box<dyn Optimizer>> {
        config.schedule.validate()?;
        let ctor = self.entries.get(config.kind.to_ascii_lowercase().as_str()).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown optimizer '{}' (known: {})",
                config.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(ctor(config))
    }
}
