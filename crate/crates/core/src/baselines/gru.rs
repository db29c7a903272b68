//! Gated recurrent unit over a sliding window, followed by a dense readout.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r ∘ h) + b_h)
//! h' = (1 − z) ∘ h + z ∘ h~
//! ```

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{Activation, DenseNetwork};
use crate::optim::{train, LrSchedule, Objective, Optimizer, TrainConfig, TrainReport};

/// Weights of one gate: input map `w` (hidden × input), recurrent map `u` (hidden × hidden), bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl GateParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        GateParams { w: Matrix::zeros(hidden, input), u: Matrix::zeros(hidden, hidden), b: vec![0.0; hidden] }
    }

    fn random(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let mut g = Self::zeros(input, hidden);
        for v in g.w.as_mut_slice().iter_mut().chain(g.u.as_mut_slice()) {
            *v = dist.sample(rng);
        }
        g
    }

    /// `x Wᵀ + h Uᵀ + b` for a batch of rows.
    fn preact(&self, x: &Matrix, h: &Matrix) -> Matrix {
        let mut a = x.matmul_t(&self.w).expect("gate input shape");
        a.axpy(1.0, &h.matmul_t(&self.u).expect("gate hidden shape")).expect("same shape");
        for r in 0..a.rows() {
            for (v, b) in a.row_mut(r).iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        a
    }

    fn len(&self) -> usize {
        self.w.as_slice().len() + self.u.as_slice().len() + self.b.len()
    }

    fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.w.as_slice());
        out.extend_from_slice(self.u.as_slice());
        out.extend_from_slice(&self.b);
    }

    fn read(&mut self, src: &[f64]) -> usize {
        let (nw, nu) = (self.w.as_slice().len(), self.u.as_slice().len());
        self.w.as_mut_slice().copy_from_slice(&src[..nw]);
        self.u.as_mut_slice().copy_from_slice(&src[nw..nw + nu]);
        let nb = self.b.len();
        self.b.copy_from_slice(&src[nw + nu..nw + nu + nb]);
        nw + nu + nb
    }

    /// Accumulates the gradient of a gate given the pre-activation gradient `da`.
    fn accumulate(&self, grad: &mut GateParams, da: &Matrix, x: &Matrix, h: &Matrix) {
        grad.w.axpy(1.0, &da.t_matmul(x).expect("shape")).expect("shape");
        grad.u.axpy(1.0, &da.t_matmul(h).expect("shape")).expect("shape");
        for r in 0..da.rows() {
            for (g, v) in grad.b.iter_mut().zip(da.row(r)) {
                *g += v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub update: GateParams,
    pub reset: GateParams,
    pub candidate: GateParams,
}

/// Per-step quantities kept for backpropagation through time.
#[derive(Debug, Clone)]
struct StepTrace {
    x: Matrix,
    h_prev: Matrix,
    z: Matrix,
    r: Matrix,
    cand: Matrix,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl GruCell {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::InvalidConfig("GRU sizes must be positive".into()));
        }
        Ok(GruCell {
            input_size,
            hidden_size,
            update: GateParams::zeros(input_size, hidden_size),
            reset: GateParams::zeros(input_size, hidden_size),
            candidate: GateParams::zeros(input_size, hidden_size),
        })
    }

    pub fn new(input_size: usize, hidden_size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::zeros(input_size, hidden_size)?;
        Ok(GruCell {
            input_size,
            hidden_size,
            update: GateParams::random(input_size, hidden_size, rng),
            reset: GateParams::random(input_size, hidden_size, rng),
            candidate: GateParams::random(input_size, hidden_size, rng),
        })
    }

    pub fn num_params(&self) -> usize {
        3 * self.update.len()
    }

    /// One recurrence step on a batch; returns `(h', z, r, h~)`.
    fn step_parts(&self, x: &Matrix, h: &Matrix) -> (Matrix, Matrix, Matrix, Matrix) {
        let z = self.update.preact(x, h).map(sigmoid);
        let r = self.reset.preact(x, h).map(sigmoid);
        let rh = r.hadamard(h).expect("shape");
        let cand = self.candidate.preact(x, &rh).map(f64::tanh);
        let mut next = h.clone();
        for (((o, &hv), &zv), &cv) in
            next.as_mut_slice().iter_mut().zip(h.as_slice()).zip(z.as_slice()).zip(cand.as_slice())
        {
            *o = (1.0 - zv) * hv + zv * cv;
        }
        (next, z, r, cand)
    }

    /// Applies one step to a batch of inputs (`batch × input`) and hidden states (`batch × hidden`).
    pub fn step(&self, x: &Matrix, h: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_size || h.cols() != self.hidden_size || x.rows() != h.rows() {
            return Err(Error::dim(
                "GruCell::step",
                format!("B x {} input and B x {} hidden", self.input_size, self.hidden_size),
                format!("{}x{} and {}x{}", x.rows(), x.cols(), h.rows(), h.cols()),
            ));
        }
        Ok(self.step_parts(x, h).0)
    }

    /// Update-gate output, exposed for invariant checks.
    pub fn update_gate(&self, x: &Matrix, h: &Matrix) -> Matrix {
        self.update.preact(x, h).map(sigmoid)
    }

    pub fn reset_gate(&self, x: &Matrix, h: &Matrix) -> Matrix {
        self.reset.preact(x, h).map(sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruPredictor {
    pub cell: GruCell,
    pub readout: DenseNetwork,
    /// Window length `k`.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruGradient {
    pub update: GateParams,
    pub reset: GateParams,
    pub candidate: GateParams,
    pub readout: Vec<f64>,
}

impl GruGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.update.write(&mut out);
        self.reset.write(&mut out);
        self.candidate.write(&mut out);
        out.extend_from_slice(&self.readout);
        out
    }
}

impl GruPredictor {
    /// Random cell and a two-layer readout `[hidden, readout_hidden, dim]`.
    pub fn new(
        dim: usize,
        hidden: usize,
        readout_hidden: usize,
        window: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("GRU window must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = GruCell::new(dim, hidden, &mut rng)?;
        let readout = DenseNetwork::with_rng(&[hidden, readout_hidden, dim], activation, &mut rng)?;
        Ok(GruPredictor { cell, readout, window })
    }

    pub fn from_parts(cell: GruCell, readout: DenseNetwork, window: usize) -> Result<Self> {
        if readout.input_dim() != cell.hidden_size || readout.output_dim() != cell.input_size {
            return Err(Error::dim(
                "GruPredictor",
                format!("readout {} -> {}", cell.hidden_size, cell.input_size),
                format!("readout {} -> {}", readout.input_dim(), readout.output_dim()),
            ));
        }
        if window == 0 {
            return Err(Error::InvalidConfig("GRU window must be at least 1".into()));
        }
        Ok(GruPredictor { cell, readout, window })
    }

    pub fn dim(&self) -> usize {
        self.cell.input_size
    }

    pub fn num_params(&self) -> usize {
        self.cell.num_params() + self.readout.num_params()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.cell.update.write(&mut out);
        self.cell.reset.write(&mut out);
        self.cell.candidate.write(&mut out);
        self.readout.write_params(&mut out);
        out
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_params() {
            return Err(Error::dim("GruPredictor::set_flat", self.num_params(), src.len()));
        }
        let mut off = self.cell.update.read(src);
        off += self.cell.reset.read(&src[off..]);
        off += self.cell.candidate.read(&src[off..]);
        self.readout.read_params(&src[off..])?;
        Ok(())
    }

    /// `windows[t]` is a `batch × dim` matrix holding step `t` of every sequence.
    fn check_windows(&self, windows: &[Matrix]) -> Result<usize> {
        if windows.len() != self.window {
            return Err(Error::InvalidInput(format!(
                "GRU expects a window of {} steps, got {}",
                self.window,
                windows.len()
            )));
        }
        let batch = windows[0].rows();
        for w in windows {
            if w.shape() != (batch, self.dim()) {
                return Err(Error::dim(
                    "GRU window",
                    format!("{batch}x{}", self.dim()),
                    format!("{}x{}", w.rows(), w.cols()),
                ));
            }
        }
        Ok(batch)
    }

    /// Final hidden state after running the window from `h0`.
    pub fn hidden_after(&self, windows: &[Matrix], h0: &Matrix) -> Result<Matrix> {
        let batch = self.check_windows(windows)?;
        if h0.shape() != (batch, self.cell.hidden_size) {
            return Err(Error::dim(
                "GRU initial state",
                format!("{batch}x{}", self.cell.hidden_size),
                format!("{}x{}", h0.rows(), h0.cols()),
            ));
        }
        let mut h = h0.clone();
        for x in windows {
            h = self.cell.step_parts(x, &h).0;
        }
        Ok(h)
    }

    /// Next-step prediction for each sequence in the batch, starting from a zero hidden state.
    pub fn forward(&self, windows: &[Matrix]) -> Result<Matrix> {
        let batch = self.check_windows(windows)?;
        let h = self.hidden_after(windows, &Matrix::zeros(batch, self.cell.hidden_size))?;
        self.readout.forward(&h)
    }

    /// Mean over the batch of `‖pred − target‖²` and its gradient (backpropagation through time).
    pub fn loss_and_grad(&self, windows: &[Matrix], target: &Matrix) -> Result<(f64, GruGradient)> {
        let batch = self.check_windows(windows)?;
        if target.shape() != (batch, self.dim()) {
            return Err(Error::dim(
                "GRU target",
                format!("{batch}x{}", self.dim()),
                format!("{}x{}", target.rows(), target.cols()),
            ));
        }
        let hid = self.cell.hidden_size;
        let mut h = Matrix::zeros(batch, hid);
        let mut steps = Vec::with_capacity(self.window);
        for x in windows {
            let (next, z, r, cand) = self.cell.step_parts(x, &h);
            steps.push(StepTrace { x: x.clone(), h_prev: h, z, r, cand });
            h = next;
        }
        let trace = self.readout.forward_trace(&h)?;
        let resid = trace.output().sub(target)?;
        let scale = 1.0 / batch as f64;
        let loss = resid.frobenius_sq() * scale;
        let ng = self.readout.backward_from_trace(&trace, &resid.scale(2.0 * scale))?;
        let mut readout = Vec::with_capacity(self.readout.num_params());
        ng.write_params(&mut readout);

        let (inp, cell) = (self.cell.input_size, &self.cell);
        let mut g_update = GateParams::zeros(inp, hid);
        let mut g_reset = GateParams::zeros(inp, hid);
        let mut g_cand = GateParams::zeros(inp, hid);
        let mut dh = ng.d_input;
        for s in steps.iter().rev() {
            let n = dh.as_slice().len();
            let mut da_z = Matrix::zeros(batch, hid);
            let mut da_h = Matrix::zeros(batch, hid);
            let mut dh_prev = Matrix::zeros(batch, hid);
            for i in 0..n {
                let (g, z, c, hp) = (dh.as_slice()[i], s.z.as_slice()[i], s.cand.as_slice()[i], s.h_prev.as_slice()[i]);
                da_z.as_mut_slice()[i] = g * (c - hp) * z * (1.0 - z);
                da_h.as_mut_slice()[i] = g * z * (1.0 - c * c);
                dh_prev.as_mut_slice()[i] = g * (1.0 - z);
            }
            let rh = s.r.hadamard(&s.h_prev)?;
            cell.candidate.accumulate(&mut g_cand, &da_h, &s.x, &rh);
            let d_rh = da_h.matmul(&cell.candidate.u)?;
            let mut da_r = Matrix::zeros(batch, hid);
            for i in 0..n {
                let (drh, r, hp) = (d_rh.as_slice()[i], s.r.as_slice()[i], s.h_prev.as_slice()[i]);
                da_r.as_mut_slice()[i] = drh * hp * r * (1.0 - r);
                dh_prev.as_mut_slice()[i] += drh * r;
            }
            cell.update.accumulate(&mut g_update, &da_z, &s.x, &s.h_prev);
            cell.reset.accumulate(&mut g_reset, &da_r, &s.x, &s.h_prev);
            dh_prev.axpy(1.0, &da_z.matmul(&cell.update.u)?)?;
            dh_prev.axpy(1.0, &da_r.matmul(&cell.reset.u)?)?;
            dh = dh_prev;
        }
        Ok((loss, GruGradient { update: g_update, reset: g_reset, candidate: g_cand, readout }))
    }

    /// Iterated forecast: each prediction is appended to the window for the next step.
    pub fn forecast(&self, history: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        if history.len() < self.window {
            return Err(Error::InvalidInput(format!(
                "GRU forecast needs {} past observations, got {}",
                self.window,
                history.len()
            )));
        }
        let mut buf: Vec<Vec<f64>> = history[history.len() - self.window..].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let windows: Vec<Matrix> = buf.iter().map(|v| Matrix::row_vector(v)).collect();
            let pred = self.forward(&windows)?.into_vec();
            buf.remove(0);
            buf.push(pred.clone());
            out.push(pred);
        }
        Ok(out)
    }
}

/// Sliding-window training set built from one or more series of `dim`-vectors.
pub struct GruProblem {
    pub predictor: GruPredictor,
    /// (window, target) pairs; each window step is a `dim`-vector.
    samples: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl GruProblem {
    pub fn new(predictor: GruPredictor, series: &[Vec<Vec<f64>>]) -> Result<Self> {
        let k = predictor.window;
        let mut samples = Vec::new();
        for s in series {
            for v in s {
                if v.len() != predictor.dim() {
                    return Err(Error::dim("GRU series", predictor.dim(), v.len()));
                }
            }
            for end in k..s.len() {
                samples.push((s[end - k..end].to_vec(), s[end].clone()));
            }
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput(format!("series too short for a GRU window of {k}")));
        }
        Ok(GruProblem { predictor, samples })
    }

    fn gather(&self, batch: &[usize]) -> Result<(Vec<Matrix>, Matrix)> {
        let dim = self.predictor.dim();
        let mut windows = Vec::with_capacity(self.predictor.window);
        for step in 0..self.predictor.window {
            let data = batch.iter().flat_map(|&i| self.samples[i].0[step].iter().copied()).collect();
            windows.push(Matrix::from_vec(batch.len(), dim, data)?);
        }
        let tdata = batch.iter().flat_map(|&i| self.samples[i].1.iter().copied()).collect();
        Ok((windows, Matrix::from_vec(batch.len(), dim, tdata)?))
    }

    pub fn into_predictor(self) -> GruPredictor {
        self.predictor
    }
}

impl Objective for GruProblem {
    fn params(&self) -> Vec<f64> {
        self.predictor.to_flat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.predictor.set_flat(params)
    }

    fn batch_domain(&self) -> Vec<usize> {
        (0..self.samples.len()).collect()
    }

    fn batch_loss_grad(&self, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let (w, t) = self.gather(batch)?;
        let (loss, grad) = self.predictor.loss_and_grad(&w, &t)?;
        Ok((loss, grad.to_flat()))
    }

    fn full_loss(&self) -> Result<f64> {
        let all: Vec<usize> = self.batch_domain();
        let (w, t) = self.gather(&all)?;
        let pred = self.predictor.forward(&w)?;
        Ok(pred.sub(&t)?.frobenius_sq() / all.len() as f64)
    }
}

pub fn fit_gru(
    predictor: GruPredictor,
    series: &[Vec<Vec<f64>>],
    optimizer: &mut dyn Optimizer,
    schedule: &LrSchedule,
    config: &TrainConfig,
) -> Result<(GruPredictor, TrainReport)> {
    let mut problem = GruProblem::new(predictor, series)?;
    let report = train(&mut problem, optimizer, schedule, config)?;
    Ok((problem.into_predictor(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_cell_halves_hidden_state() {
        let cell = GruCell::zeros(2, 3).unwrap();
        let x = Matrix::row_vector(&[0.7, -0.2]);
        let mut h = Matrix::row_vector(&[0.8, -0.4, 0.2]);
        let h0 = h.clone();
        for t in 1..=6 {
            h = cell.step(&x, &h).unwrap();
            assert_eq!(h, h0.scale(0.5f64.powi(t)));
        }
    }

    #[test]
    fn zero_weights_predict_readout_of_zero() {
        let cell = GruCell::zeros(1, 2).unwrap();
        let readout = DenseNetwork::new(&[2, 3, 1], Activation::Tanh, 4).unwrap();
        let p = GruPredictor::from_parts(cell, readout.clone(), 3).unwrap();
        let w = vec![Matrix::row_vector(&[0.3]); 3];
        assert_eq!(p.forward(&w).unwrap(), readout.forward(&Matrix::zeros(1, 2)).unwrap());
        assert!(matches!(p.forward(&w[..2]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn flat_roundtrip() {
        let mut p = GruPredictor::new(2, 3, 4, 2, Activation::Tanh, 1).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.num_params());
        let q = p.clone();
        p.set_flat(&flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn training_reduces_loss() {
        let series: Vec<Vec<f64>> = (0..40).map(|t| vec![0.5 * (t as f64 * 0.3).sin()]).collect();
        let p = GruPredictor::new(1, 4, 4, 3, Activation::Tanh, 2).unwrap();
        let problem = GruProblem::new(p.clone(), std::slice::from_ref(&series)).unwrap();
        let before = problem.full_loss().unwrap();
        let mut opt = crate::optim::Adam::default();
        let (_, report) =
            fit_gru(p, &[series], &mut opt, &LrSchedule::constant(0.01), &TrainConfig::new(200, 8, 0)).unwrap();
        assert!(*report.loss_history.last().unwrap() < 0.5 * before);
    }

    proptest! {
        #[test]
        fn gates_and_states_bounded(
            xs in prop::collection::vec(-50.0f64..50.0, 2),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cell = GruCell::new(2, 3, &mut rng).unwrap();
            for v in cell.update.w.as_mut_slice() { *v *= 10.0; }
            let x = Matrix::row_vector(&xs);
            let mut h = Matrix::zeros(1, 3);
            for _ in 0..5 {
                let z = cell.update_gate(&x, &h);
                let r = cell.reset_gate(&x, &h);
                prop_assert!(z.as_slice().iter().chain(r.as_slice()).all(|&g| (0.0..=1.0).contains(&g)));
                h = cell.step(&x, &h).unwrap();
                prop_assert!(h.as_slice().iter().all(|v| v.abs() <= 1.0));
            }
        }
    }
}
