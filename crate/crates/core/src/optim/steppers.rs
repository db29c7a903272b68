//! Parameter update rules over flat parameter buffers.

use serde::{Deserialize, Serialize};

use super::Optimizer;
use crate::error::{Error, Result};

fn check_shapes(op: &'static str, params: &[f64], grad: &[f64]) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::dim(op, params.len(), grad.len()));
    }
    Ok(())
}

/// `θ ← θ − lr·ĝ`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    check_shapes("sgd_step", params, grad)?;
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct Sgd;

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        sgd_step(params, grad, lr)
    }
}

pub const ADAM_ETA: f64 = 0.001;
pub const ADAM_RHO1: f64 = 0.9;
pub const ADAM_RHO2: f64 = 0.999;
pub const ADAM_DELTA: f64 = 1e-8;

/// Moment buffers and constants for Adam. Buffers are sized on first use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// 1-based step counter used in the bias corrections.
    pub k: u64,
    pub rho1: f64,
    pub rho2: f64,
    pub delta: f64,
    pub eta: f64,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(ADAM_ETA, ADAM_RHO1, ADAM_RHO2, ADAM_DELTA)
    }
}

impl AdamState {
    pub fn new(eta: f64, rho1: f64, rho2: f64, delta: f64) -> Self {
        AdamState { u: Vec::new(), v: Vec::new(), k: 1, rho1, rho2, delta, eta }
    }
}

/// One Adam update with the state's own `eta`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    check_shapes("adam_step", params, grad)?;
    if state.u.is_empty() {
        state.u = vec![0.0; params.len()];
        state.v = vec![0.0; params.len()];
    }
    if state.u.len() != params.len() {
        return Err(Error::dim("adam_step state", state.u.len(), params.len()));
    }
    let k = state.k as i32;
    let c1 = 1.0 - state.rho1.powi(k);
    let c2 = 1.0 - state.rho2.powi(k);
    for i in 0..params.len() {
        let g = grad[i];
        state.u[i] = state.rho1 * state.u[i] + (1.0 - state.rho1) * g;
        state.v[i] = state.rho2 * state.v[i] + (1.0 - state.rho2) * g * g;
        let u_hat = state.u[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.eta * u_hat / (v_hat.sqrt() + state.delta);
    }
    state.k += 1;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub state: AdamState,
}

impl Adam {
    pub fn new(rho1: f64, rho2: f64, delta: f64) -> Self {
        Adam { state: AdamState::new(ADAM_ETA, rho1, rho2, delta) }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        self.state.eta = lr;
        adam_step(&mut self.state, params, grad)
    }
}

pub const ACCUM_EPS: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;

/// Squared-gradient accumulator shared by AdaGrad (running sum) and RMSProp (moving average).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumState {
    pub acc: Vec<f64>,
    /// Moving-average decay (RMSProp only).
    pub decay: f64,
    pub eps: f64,
}

impl AccumState {
    pub fn adagrad() -> Self {
        AccumState { acc: Vec::new(), decay: 0.0, eps: ACCUM_EPS }
    }

    pub fn rmsprop() -> Self {
        AccumState { acc: Vec::new(), decay: RMSPROP_DECAY, eps: ACCUM_EPS }
    }

    fn ensure(&mut self, len: usize, op: &'static str) -> Result<()> {
        if self.acc.is_empty() {
            self.acc = vec![0.0; len];
        }
        if self.acc.len() != len {
            return Err(Error::dim(op, self.acc.len(), len));
        }
        Ok(())
    }
}

/// AdaGrad: `r ← r + ĝ∘ĝ`, `θ ← θ − lr·ĝ/(√r + ε)`.
pub fn adagrad_step(state: &mut AccumState, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    check_shapes("adagrad_step", params, grad)?;
    state.ensure(params.len(), "adagrad_step state")?;
    for ((p, &g), r) in params.iter_mut().zip(grad).zip(state.acc.iter_mut()) {
        *r += g * g;
        *p -= lr * g / (r.sqrt() + state.eps);
    }
    Ok(())
}

/// RMSProp: `r ← ρ r + (1−ρ) ĝ∘ĝ`, `θ ← θ − lr·ĝ/(√r + ε)`.
pub fn rmsprop_step(state: &mut AccumState, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    check_shapes("rmsprop_step", params, grad)?;
    state.ensure(params.len(), "rmsprop_step state")?;
    let rho = state.decay;
    for ((p, &g), r) in params.iter_mut().zip(grad).zip(state.acc.iter_mut()) {
        *r = rho * *r + (1.0 - rho) * g * g;
        *p -= lr * g / (r.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AdaGrad {
    pub state: AccumState,
}

impl Default for AdaGrad {
    fn default() -> Self {
        AdaGrad { state: AccumState::adagrad() }
    }
}

impl Optimizer for AdaGrad {
    fn name(&self) -> &'static str {
        "adagrad"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        adagrad_step(&mut self.state, params, grad, lr)
    }
}

#[derive(Debug, Clone)]
pub struct RmsProp {
    pub state: AccumState,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp { state: AccumState::rmsprop() }
    }
}

impl Optimizer for RmsProp {
    fn name(&self) -> &'static str {
        "rmsprop"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        rmsprop_step(&mut self.state, params, grad, lr)
    }
}
