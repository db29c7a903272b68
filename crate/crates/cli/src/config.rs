//! Experiment description: one TOML file per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stnn_core::data::{NormMode, Periods};
use stnn_core::forecast::{ForecasterRegistry, ModelSpec};
use stnn_core::optim::{OptimizerConfig, OptimizerRegistry, TrainConfig};
use stnn_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in comparison tables; the config file stem when absent.
    #[serde(default)]
    pub name: Option<String>,
    /// Required, either here or via `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Wide CSV: `date,<location>:<target>,...`.
    pub series: PathBuf,
    /// One square CSV per spatial relation.
    #[serde(default)]
    pub spatial: Vec<PathBuf>,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default)]
    pub normalization: NormMode,
    #[serde(default)]
    pub periods: Periods,
    /// Sum all locations into one before training.
    #[serde(default)]
    pub aggregate: bool,
    /// Replace the targets by `confirmed − deaths − recovered`.
    #[serde(default)]
    pub active: bool,
    #[serde(default)]
    pub exclude: Vec<String>,
}

fn default_split() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch_size: usize,
    /// Relative loss improvement over `stop_window` epochs below which training stops.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    /// 0 trains for the full epoch budget.
    #[serde(default = "default_stop_window")]
    pub stop_window: usize,
}

fn default_epochs() -> usize {
    10_000
}
fn default_minibatch() -> usize {
    32
}
fn default_stop_tol() -> f64 {
    1e-8
}
fn default_stop_window() -> usize {
    100
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            minibatch_size: default_minibatch(),
            stop_tol: default_stop_tol(),
            stop_window: default_stop_window(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub spatial: Vec<PathBuf>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads a config file, resolving data paths relative to its directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data.series = base.join(&cfg.data.series);
        for p in &mut cfg.data.spatial {
            *p = base.join(&*p);
        }
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.data {
            self.data.series = d.clone();
        }
        if !o.spatial.is_empty() {
            self.data.spatial = o.spatial.clone();
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
    }

    /// Every check that can run without reading data.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::InvalidConfig("a seed is required (set `seed` or pass --seed)".into()));
        }
        for p in std::iter::once(&self.data.series).chain(&self.data.spatial) {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("data file {} does not exist", p.display())));
            }
        }
        let r = self.data.split_ratio;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidConfig(format!("split_ratio must be in (0, 1), got {r}")));
        }
        ForecasterRegistry::default().build(&self.model, 0)?;
        OptimizerRegistry::default().build(&self.optimizer)?;
        if self.train.epochs < 1 || self.train.minibatch_size < 1 {
            return Err(Error::InvalidConfig("epochs and minibatch_size must be at least 1".into()));
        }
        if self.data.aggregate && !self.data.spatial.is_empty() {
            return Err(Error::InvalidConfig(
                "spatial matrices cannot be used with aggregate = true (one location remains)".into(),
            ));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.model.kind.clone())
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut tc = TrainConfig::new(self.train.epochs, self.train.minibatch_size, self.seed());
        tc.stop_tol = self.train.stop_tol;
        tc.window = self.train.stop_window;
        tc
    }

    /// SHA-256 of the canonical JSON form, so formatting-only edits keep the digest.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
