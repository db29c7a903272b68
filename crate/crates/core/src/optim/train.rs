use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LrSchedule, Optimizer};
use crate::error::{Error, Result};

/// A differentiable training objective over a flat parameter vector.
pub trait Objective {
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// Sample indices that minibatches are drawn from.
    fn batch_domain(&self) -> Vec<usize>;

    /// Minibatch loss and its gradient.
    fn batch_loss_grad(&self, batch: &[usize]) -> Result<(f64, Vec<f64>)>;

    /// Loss recorded in the history after each epoch.
    fn full_loss(&self) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub minibatch_size: usize,
    pub seed: u64,
    /// Stop once the relative loss improvement over `window` epochs drops below this.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_stop_tol() -> f64 {
    1e-8
}

fn default_window() -> usize {
    100
}

impl TrainConfig {
    pub fn new(max_epochs: usize, minibatch_size: usize, seed: u64) -> Self {
        TrainConfig { max_epochs, minibatch_size, seed, stop_tol: default_stop_tol(), window: default_window() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full loss after each epoch.
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    pub steps: u64,
    pub stopped_early: bool,
}

impl TrainReport {
    /// Two-column `epoch,loss` CSV, epochs 1-based.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.loss_history.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, l);
        }
        out
    }
}

/// Minibatch training: every epoch reshuffles the batch domain (seeded), steps
/// through it in chunks of `minibatch_size`, then records the full loss.
pub fn train<O: Objective + ?Sized>(
    objective: &mut O,
    optimizer: &mut dyn Optimizer,
    schedule: &LrSchedule,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if config.max_epochs < 1 {
        return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
    }
    if config.minibatch_size < 1 {
        return Err(Error::InvalidConfig("minibatch_size must be at least 1".into()));
    }
    schedule.validate()?;
    let mut domain = objective.batch_domain();
    if domain.is_empty() {
        return Err(Error::InvalidInput("objective has no samples to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = objective.params();
    let mut history = Vec::with_capacity(config.max_epochs.min(100_000));
    let mut k = 0u64;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        domain.shuffle(&mut rng);
        for batch in domain.chunks(config.minibatch_size) {
            let (loss, grad) = objective.batch_loss_grad(batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            optimizer.step(&mut params, &grad, schedule.lr_at(k))?;
            objective.set_params(&params)?;
            k += 1;
        }
        let loss = objective.full_loss()?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(loss);

        let w = config.window;
        if w > 0 && history.len() > w {
            let before = history[history.len() - 1 - w];
            let gain = (before - loss) / before.abs().max(f64::MIN_POSITIVE);
            if gain < config.stop_tol || loss == 0.0 {
                log::debug!("plateau at epoch {epoch}: relative gain {gain:.3e}");
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainReport { epochs: history.len(), loss_history: history, steps: k, stopped_early })
}
