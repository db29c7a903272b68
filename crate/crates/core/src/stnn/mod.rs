//! Spatio-temporal networks with trainable hidden states.
//!
//! Every variant has an observation network `a` (hidden state → targets), a
//! state network `b` advancing the spatially coupled hidden state, and one
//! trainable `n × l` hidden state per observed time step. The variants only
//! differ in what `b` sees:
//!
//! - [`StnnVariant::Classic`]: the superposition `s + Σ W_i s`.
//! - [`StnnVariant::Augmented`]: the concatenation `[s | W_1 s | ... | W_p s]`.
//! - [`StnnVariant::InputGate`]: `[c(x_{t-1}) | s | W_1 s | ... | W_p s]`, where
//!   `c` is an input network fed with the previous observation.
//!
//! Time indices in this module are 0-based: `states[t]` pairs with `data[t]`.

mod objective;
mod problem;
mod rollout;
mod spatial;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{Activation, DenseNetwork};

pub use objective::StnnGradient;
pub use problem::{fit_stnn, StnnProblem};
pub use rollout::{InputSource, RolloutStep};
pub use spatial::{spatial_augment, spatial_superpose, SpatialFeatureSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StnnVariant {
    Classic,
    Augmented,
    InputGate,
}

impl StnnVariant {
    /// Minimum number of observed steps the loss is defined for.
    pub fn min_steps(self) -> usize {
        match self {
            StnnVariant::InputGate => 3,
            _ => 2,
        }
    }

    /// 0-based indices `t` whose transition `s_t → s_{t+1}` enters the loss.
    pub fn transition_range(self, m: usize) -> std::ops::Range<usize> {
        match self {
            StnnVariant::InputGate => 1..m.saturating_sub(1),
            _ => 0..m.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StnnConfig {
    /// Number of locations.
    pub n: usize,
    /// Number of observed targets per location.
    pub d: usize,
    /// Number of spatial feature matrices.
    pub p: usize,
    /// Hidden state width per location.
    pub l: usize,
    pub variant: StnnVariant,
    /// Hidden layer widths of the observation network `a` (`l → d`).
    #[serde(default)]
    pub a_hidden: Vec<usize>,
    /// Hidden layer widths of the state network `b`.
    #[serde(default)]
    pub b_hidden: Vec<usize>,
    /// Hidden layer widths of the input network `c` (input-gate only).
    #[serde(default)]
    pub c_hidden: Vec<usize>,
    /// Output width of `c` (input-gate only).
    #[serde(default = "default_c_out")]
    pub c_out: usize,
    #[serde(default = "default_activation")]
    pub activation_a: Activation,
    #[serde(default = "default_activation")]
    pub activation_b: Activation,
    #[serde(default = "default_activation")]
    pub activation_c: Activation,
    #[serde(default)]
    pub reg_l2: f64,
    pub seed: u64,
}

fn default_c_out() -> usize {
    4
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl StnnConfig {
    /// A config with no hidden layers and tanh everywhere.
    pub fn new(n: usize, d: usize, p: usize, l: usize, variant: StnnVariant, seed: u64) -> Self {
        StnnConfig {
            n,
            d,
            p,
            l,
            variant,
            a_hidden: Vec::new(),
            b_hidden: Vec::new(),
            c_hidden: Vec::new(),
            c_out: default_c_out(),
            activation_a: Activation::Tanh,
            activation_b: Activation::Tanh,
            activation_c: Activation::Tanh,
            reg_l2: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.l == 0 {
            return Err(Error::InvalidConfig(format!(
                "n, d and l must be positive (n={}, d={}, l={})",
                self.n, self.d, self.l
            )));
        }
        if !(self.reg_l2 >= 0.0 && self.reg_l2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "reg_l2 must be a finite nonnegative number, got {}",
                self.reg_l2
            )));
        }
        if self.variant == StnnVariant::InputGate && self.c_out == 0 {
            return Err(Error::InvalidConfig("c_out must be positive".into()));
        }
        Ok(())
    }

    pub fn a_sizes(&self) -> Vec<usize> {
        chain(self.l, &self.a_hidden, self.d)
    }

    pub fn b_input_dim(&self) -> usize {
        match self.variant {
            StnnVariant::Classic => self.l,
            StnnVariant::Augmented => (self.p + 1) * self.l,
            StnnVariant::InputGate => self.c_out + (self.p + 1) * self.l,
        }
    }

    pub fn b_sizes(&self) -> Vec<usize> {
        chain(self.b_input_dim(), &self.b_hidden, self.l)
    }

    pub fn c_sizes(&self) -> Option<Vec<usize>> {
        (self.variant == StnnVariant::InputGate).then(|| chain(self.d, &self.c_hidden, self.c_out))
    }
}

fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

/// Trainable parameters: the networks plus one hidden state per observed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StnnParams {
    pub a: DenseNetwork,
    pub b: DenseNetwork,
    pub c: Option<DenseNetwork>,
    pub states: Vec<Matrix>,
}

impl StnnParams {
    pub fn num_params(&self) -> usize {
        self.a.num_params()
            + self.b.num_params()
            + self.c.as_ref().map_or(0, DenseNetwork::num_params)
            + self.states.iter().map(|s| s.as_slice().len()).sum::<usize>()
    }

    /// Flattens as `a`, `b`, `c`, then `s_1..s_m`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.a.write_params(&mut out);
        self.b.write_params(&mut out);
        if let Some(c) = &self.c {
            c.write_params(&mut out);
        }
        for s in &self.states {
            out.extend_from_slice(s.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("StnnParams::set_flat", self.num_params(), flat.len()));
        }
        let mut pos = self.a.read_params(flat)?;
        pos += self.b.read_params(&flat[pos..])?;
        if let Some(c) = &mut self.c {
            pos += c.read_params(&flat[pos..])?;
        }
        for s in &mut self.states {
            let len = s.as_slice().len();
            s.as_mut_slice().copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        Ok(())
    }

    /// Sum of squared weights over all networks (biases and states excluded).
    pub fn weight_sq_sum(&self) -> f64 {
        self.a.weight_sq_sum() + self.b.weight_sq_sum() + self.c.as_ref().map_or(0.0, DenseNetwork::weight_sq_sum)
    }
}

/// A configured STNN together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StnnModel {
    pub config: StnnConfig,
    pub params: StnnParams,
}

impl StnnModel {
    /// Seeded initialization for a series of `m` steps. Hidden states start uniform in `±0.1`.
    pub fn new(config: StnnConfig, m: usize) -> Result<Self> {
        config.validate()?;
        if m < config.variant.min_steps() {
            return Err(Error::InvalidInput(format!(
                "{:?} needs at least {} time steps, got {m}",
                config.variant,
                config.variant.min_steps()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = DenseNetwork::with_rng(&config.a_sizes(), config.activation_a, &mut rng)?;
        let b = DenseNetwork::with_rng(&config.b_sizes(), config.activation_b, &mut rng)?;
        let c = match config.c_sizes() {
            Some(sizes) => Some(DenseNetwork::with_rng(&sizes, config.activation_c, &mut rng)?),
            None => None,
        };
        let dist = Uniform::new_inclusive(-0.1, 0.1);
        let states = (0..m)
            .map(|_| {
                let data = (0..config.n * config.l).map(|_| dist.sample(&mut rng)).collect();
                Matrix::from_vec(config.n, config.l, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StnnModel { config, params: StnnParams { a, b, c, states } })
    }

    /// Wraps existing parameters after checking them against `config`.
    pub fn from_parts(config: StnnConfig, params: StnnParams) -> Result<Self> {
        config.validate()?;
        let model = StnnModel { config, params };
        model.check_params()?;
        Ok(model)
    }

    pub(crate) fn check_params(&self) -> Result<()> {
        let cfg = &self.config;
        let p = &self.params;
        if p.a.layer_sizes() != cfg.a_sizes().as_slice() {
            return Err(Error::dim(
                "StnnModel network a",
                format!("{:?}", cfg.a_sizes()),
                format!("{:?}", p.a.layer_sizes()),
            ));
        }
        if p.b.layer_sizes() != cfg.b_sizes().as_slice() {
            return Err(Error::dim(
                "StnnModel network b",
                format!("{:?}", cfg.b_sizes()),
                format!("{:?}", p.b.layer_sizes()),
            ));
        }
        match (cfg.c_sizes(), &p.c) {
            (None, None) => {}
            (Some(sizes), Some(c)) if c.layer_sizes() == sizes.as_slice() => {}
            (expected, got) => {
                return Err(Error::dim(
                    "StnnModel network c",
                    format!("{expected:?}"),
                    format!("{:?}", got.as_ref().map(|c| c.layer_sizes().to_vec())),
                ))
            }
        }
        if p.states.len() < cfg.variant.min_steps() {
            return Err(Error::InvalidInput(format!(
                "{:?} needs at least {} hidden states, got {}",
                cfg.variant,
                cfg.variant.min_steps(),
                p.states.len()
            )));
        }
        if let Some(s) = p.states.iter().find(|s| s.shape() != (cfg.n, cfg.l)) {
            return Err(Error::dim(
                "StnnModel hidden state",
                format!("{}x{}", cfg.n, cfg.l),
                format!("{}x{}", s.rows(), s.cols()),
            ));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.params.states.len()
    }

    pub fn variant(&self) -> StnnVariant {
        self.config.variant
    }

    /// Observation network applied to every hidden state: `a(s_t)` for each `t`.
    pub fn fitted(&self) -> Result<Vec<Matrix>> {
        self.params.states.iter().map(|s| self.params.a.forward(s)).collect()
    }

    /// Input to `b` for the hidden state `s`, with the previous observation for the input-gate variant.
    pub fn transition_input(&self, s: &Matrix, prev_obs: Option<&Matrix>, w: &SpatialFeatureSet) -> Result<Matrix> {
        match self.config.variant {
            StnnVariant::Classic => w.superpose(s),
            StnnVariant::Augmented => w.augment(s),
            StnnVariant::InputGate => {
                let c = self.params.c.as_ref().expect("input-gate model carries network c");
                let x = prev_obs.ok_or_else(|| {
                    Error::InvalidInput("input-gate transition needs the previous observation".into())
                })?;
                let gate = c.forward(x)?;
                Matrix::hstack(&[&gate, &w.augment(s)?])
            }
        }
    }

    /// One state transition `s ↦ b(coupling(s))`.
    pub fn transition(&self, s: &Matrix, prev_obs: Option<&Matrix>, w: &SpatialFeatureSet) -> Result<Matrix> {
        self.params.b.forward(&self.transition_input(s, prev_obs, w)?)
    }

    /// Runs the model forward from `initial` states: one state for
    /// classic/augmented, two for input-gate.
    /// Returns `(states, observations)` of length `m`; observations are `a(s_t)`.
    pub fn simulate(&self, initial: &[Matrix], m: usize, w: &SpatialFeatureSet) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let need = if self.variant() == StnnVariant::InputGate { 2 } else { 1 };
        if initial.len() != need {
            return Err(Error::InvalidInput(format!(
                "simulation needs {need} initial state(s), got {}",
                initial.len()
            )));
        }
        if m < need {
            return Err(Error::InvalidInput(format!("cannot simulate {m} steps")));
        }
        let mut states: Vec<Matrix> = initial.to_vec();
        let mut obs: Vec<Matrix> = states.iter().map(|s| self.params.a.forward(s)).collect::<Result<_>>()?;
        while states.len() < m {
            let t = states.len() - 1;
            let prev = if self.variant() == StnnVariant::InputGate { Some(&obs[t - 1]) } else { None };
            let next = self.transition(&states[t], prev, w)?;
            obs.push(self.params.a.forward(&next)?);
            states.push(next);
        }
        Ok((states, obs))
    }

    pub(crate) fn check_data(&self, data: &[Matrix], w: &SpatialFeatureSet) -> Result<()> {
        let cfg = &self.config;
        if data.len() != self.m() {
            return Err(Error::InvalidInput(format!(
                "series has {} steps but the model holds {} hidden states",
                data.len(),
                self.m()
            )));
        }
        if data.len() < cfg.variant.min_steps() {
            return Err(Error::InvalidInput(format!(
                "{:?} needs at least {} time steps, got {}",
                cfg.variant,
                cfg.variant.min_steps(),
                data.len()
            )));
        }
        if w.n() != cfg.n || w.p() != cfg.p {
            return Err(Error::dim(
                "spatial features",
                format!("p={} matrices of {}x{}", cfg.p, cfg.n, cfg.n),
                format!("p={} matrices of {}x{}", w.p(), w.n(), w.n()),
            ));
        }
        let (lo, hi) = cfg.activation_a.range();
        for (t, x) in data.iter().enumerate() {
            if x.shape() != (cfg.n, cfg.d) {
                return Err(Error::dim(
                    "observation",
                    format!("{}x{}", cfg.n, cfg.d),
                    format!("{}x{} at t={t}", x.rows(), x.cols()),
                ));
            }
            if let Some(v) = x.as_slice().iter().find(|v| !(lo..=hi).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "observation {v} at t={t} lies outside the output activation range [{lo}, {hi}]; normalize the data first"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_shapes_follow_variant() {
        let mut cfg = StnnConfig::new(3, 2, 2, 4, StnnVariant::Classic, 0);
        assert_eq!(cfg.b_sizes(), vec![4, 4]);
        cfg.variant = StnnVariant::Augmented;
        assert_eq!(cfg.b_sizes(), vec![12, 4]);
        cfg.variant = StnnVariant::InputGate;
        cfg.c_out = 5;
        cfg.b_hidden = vec![7];
        assert_eq!(cfg.b_sizes(), vec![17, 7, 4]);
        assert_eq!(cfg.c_sizes(), Some(vec![2, 5]));
        assert_eq!(cfg.a_sizes(), vec![4, 2]);
    }

    #[test]
    fn init_is_seeded_and_small() {
        let cfg = StnnConfig::new(3, 1, 1, 2, StnnVariant::Augmented, 11);
        let a = StnnModel::new(cfg.clone(), 5).unwrap();
        let b = StnnModel::new(cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m(), 5);
        assert!(a.params.states.iter().all(|s| s.as_slice().iter().all(|v| v.abs() <= 0.1)));
        assert!(a.params.c.is_none());
    }

    #[test]
    fn too_short_series_rejected() {
        let cfg = StnnConfig::new(1, 1, 0, 1, StnnVariant::InputGate, 0);
        assert!(matches!(StnnModel::new(cfg, 2), Err(Error::InvalidInput(_))));
        let cfg = StnnConfig::new(1, 1, 0, 1, StnnVariant::Classic, 0);
        assert!(StnnModel::new(cfg, 1).is_err());
    }

    #[test]
    fn negative_regularization_rejected() {
        let mut cfg = StnnConfig::new(1, 1, 0, 1, StnnVariant::Classic, 0);
        cfg.reg_l2 = -1.0;
        assert!(matches!(StnnModel::new(cfg, 3), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn flat_params_round_trip() {
        let cfg = StnnConfig::new(2, 1, 1, 3, StnnVariant::InputGate, 4);
        let model = StnnModel::new(cfg, 4).unwrap();
        let flat = model.params.to_flat();
        assert_eq!(flat.len(), model.params.num_params());
        let mut other = StnnModel::new(StnnConfig { seed: 99, ..model.config.clone() }, 4).unwrap();
        other.params.set_flat(&flat).unwrap();
        assert_eq!(other.params, model.params);
    }

    #[test]
    fn out_of_range_targets_rejected() {
        let cfg = StnnConfig::new(1, 1, 0, 1, StnnVariant::Classic, 0);
        let model = StnnModel::new(cfg, 2).unwrap();
        let data = vec![Matrix::row_vector(&[0.5]), Matrix::row_vector(&[1.5])];
        let err = model.loss(&data, &SpatialFeatureSet::empty(1)).unwrap_err();
        assert!(err.to_string().contains("normalize"), "{err}");
    }
}
