//! Back-propagation network regressing the observation on normalized time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{Activation, DenseNetwork};
use crate::optim::{train, LrSchedule, Objective, Sgd, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpnnConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub minibatch_size: usize,
}

fn default_hidden() -> usize {
    5
}
fn default_epochs() -> usize {
    1000
}
fn default_restarts() -> usize {
    10
}
fn default_lr() -> f64 {
    0.2
}
fn default_batch() -> usize {
    1
}

impl Default for BpnnConfig {
    fn default() -> Self {
        BpnnConfig {
            hidden: default_hidden(),
            epochs: default_epochs(),
            restarts: default_restarts(),
            lr: default_lr(),
            minibatch_size: default_batch(),
        }
    }
}

pub fn bpnn_predict(net: &DenseNetwork, t: f64) -> Result<Vec<f64>> {
    Ok(net.forward(&Matrix::row_vector(&[t]))?.into_vec())
}

/// Time index `i` of a training series of length `m_train`, mapped to `[0, 1]`.
pub fn bpnn_time(i: usize, m_train: usize) -> f64 {
    if m_train <= 1 {
        i as f64
    } else {
        i as f64 / (m_train - 1) as f64
    }
}

struct BpnnProblem<'a> {
    net: DenseNetwork,
    inputs: Matrix,
    targets: &'a Matrix,
}

impl BpnnProblem<'_> {
    fn rows(&self, batch: &[usize]) -> Result<(Matrix, Matrix)> {
        let x = Matrix::from_vec(batch.len(), 1, batch.iter().map(|&i| self.inputs[(i, 0)]).collect())?;
        let d = self.targets.cols();
        let y = Matrix::from_vec(
            batch.len(),
            d,
            batch.iter().flat_map(|&i| self.targets.row(i).iter().copied()).collect(),
        )?;
        Ok((x, y))
    }
}

impl Objective for BpnnProblem<'_> {
    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.net.num_params());
        self.net.write_params(&mut out);
        out
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.read_params(params).map(|_| ())
    }

    fn batch_domain(&self) -> Vec<usize> {
        (0..self.inputs.rows()).collect()
    }

    fn batch_loss_grad(&self, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let (x, y) = self.rows(batch)?;
        let trace = self.net.forward_trace(&x)?;
        let resid = trace.output().sub(&y)?;
        let scale = 1.0 / batch.len() as f64;
        let g = self.net.backward_from_trace(&trace, &resid.scale(2.0 * scale))?;
        let mut flat = Vec::with_capacity(self.net.num_params());
        g.write_params(&mut flat);
        Ok((resid.frobenius_sq() * scale, flat))
    }

    fn full_loss(&self) -> Result<f64> {
        let pred = self.net.forward(&self.inputs)?;
        Ok(pred.sub(self.targets)?.frobenius_sq() / self.inputs.rows() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct BpnnFit {
    pub net: DenseNetwork,
    /// RMSE on the training targets (in their given scale).
    pub train_rmse: f64,
    /// Best train RMSE after each restart, running minimum.
    pub best_after_restart: Vec<f64>,
    pub epochs: usize,
}

/// Fits `targets` (`m × d`, one row per time step) against `t = i/(m−1)` with
/// plain SGD, restarting from `restarts` seeds `seed, seed+1, ...` and keeping
/// the lowest training RMSE.
pub fn fit_bpnn(targets: &Matrix, activation: Activation, config: &BpnnConfig, seed: u64) -> Result<BpnnFit> {
    let m = targets.rows();
    if m < 2 {
        return Err(Error::InvalidInput("BPNN needs at least two time steps".into()));
    }
    if config.restarts == 0 {
        return Err(Error::InvalidConfig("BPNN restarts must be at least 1".into()));
    }
    let inputs = Matrix::from_vec(m, 1, (0..m).map(|i| bpnn_time(i, m)).collect())?;
    let sizes = [1, config.hidden, targets.cols()];
    let schedule = LrSchedule::constant(config.lr);
    let mut best: Option<(f64, DenseNetwork, usize)> = None;
    let mut trail = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let s = seed.wrapping_add(r as u64);
        let mut problem =
            BpnnProblem { net: DenseNetwork::new(&sizes, activation, s)?, inputs: inputs.clone(), targets };
        let mut tc = TrainConfig::new(config.epochs, config.minibatch_size, s);
        // Fixed-length protocol: no plateau stop.
        tc.window = 0;
        let report = train(&mut problem, &mut Sgd, &schedule, &tc)?;
        let rmse = problem.full_loss()?.sqrt() / (targets.cols() as f64).sqrt();
        if best.as_ref().is_none_or(|(b, _, _)| rmse < *b) {
            best = Some((rmse, problem.net, report.epochs));
        }
        trail.push(best.as_ref().expect("set above").0);
    }
    let (train_rmse, net, epochs) = best.expect("restarts >= 1");
    Ok(BpnnFit { net, train_rmse, best_after_restart: trail, epochs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_predicts_zero() {
        let net = DenseNetwork::zeros(&[1, 5, 3], Activation::Tanh).unwrap();
        for t in [0.0, 0.3, 1.0, 1.4] {
            assert_eq!(bpnn_predict(&net, t).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn learns_a_line() {
        let m = 30;
        let y = Matrix::from_vec(m, 1, (0..m).map(|i| bpnn_time(i, m) * 0.8).collect()).unwrap();
        let fit = fit_bpnn(&y, Activation::Tanh, &BpnnConfig::default(), 0).unwrap();
        assert!(fit.train_rmse <= 0.01, "rmse {}", fit.train_rmse);
    }

    #[test]
    fn restarts_never_worsen_best() {
        let m = 12;
        let y = Matrix::from_vec(m, 1, (0..m).map(|i| (i as f64 * 0.5).sin() * 0.5).collect()).unwrap();
        let cfg = BpnnConfig { restarts: 4, epochs: 50, ..Default::default() };
        let fit = fit_bpnn(&y, Activation::Tanh, &cfg, 3).unwrap();
        assert!(fit.best_after_restart.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*fit.best_after_restart.last().unwrap(), fit.train_rmse);
    }
}
