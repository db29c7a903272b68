//! Fully-connected networks with exact reverse-mode gradients.
//!
//! A network maps a batch of rows `batch × in_dim` to `batch × out_dim` by
//! applying the same per-row map `y = act(W x + b)` layer after layer. The
//! activation is applied on every layer, including the output layer, so
//! targets must live inside the activation's range.
//!
//! Gradients are available with respect to the weights, the biases and the
//! input itself; the last one is what allows hidden states to be trained.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y = act(z)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    /// Closed hull of the activation's image.
    pub fn range(self) -> (f64, f64) {
        match self {
            Activation::Tanh => (-1.0, 1.0),
            Activation::Sigmoid => (0.0, 1.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidConfig(format!("unknown activation '{other}' (expected tanh or sigmoid)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRepr", into = "NetRepr")]
pub struct DenseNetwork {
    layer_sizes: Vec<usize>,
    /// Layer `i` weight is `layer_sizes[i+1] × layer_sizes[i]`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct NetRepr {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<NetRepr> for DenseNetwork {
    type Error = Error;

    fn try_from(r: NetRepr) -> Result<Self> {
        check_layer_sizes(&r.layer_sizes)?;
        let layers = r.layer_sizes.len() - 1;
        if r.weights.len() != layers || r.biases.len() != layers {
            return Err(Error::dim(
                "DenseNetwork",
                format!("{layers} weight/bias layers"),
                format!("{}/{}", r.weights.len(), r.biases.len()),
            ));
        }
        for (i, (w, b)) in r.weights.iter().zip(&r.biases).enumerate() {
            let (out, inp) = (r.layer_sizes[i + 1], r.layer_sizes[i]);
            if w.shape() != (out, inp) || b.len() != out {
                return Err(Error::dim(
                    "DenseNetwork",
                    format!("layer {i}: {out}x{inp} weight, {out} biases"),
                    format!("{}x{} weight, {} biases", w.rows(), w.cols(), b.len()),
                ));
            }
        }
        Ok(DenseNetwork { layer_sizes: r.layer_sizes, weights: r.weights, biases: r.biases, activation: r.activation })
    }
}

impl From<DenseNetwork> for NetRepr {
    fn from(n: DenseNetwork) -> Self {
        NetRepr { layer_sizes: n.layer_sizes, activation: n.activation, weights: n.weights, biases: n.biases }
    }
}

fn check_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!("a network needs at least 2 layer sizes, got {}", sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!("layer sizes must be positive: {sizes:?}")));
    }
    Ok(())
}

/// Gradients of `⟨upstream, net(input)⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradient {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Vec<f64>>,
    pub d_input: Matrix,
}

impl NetGradient {
    /// Appends the parameter gradient in [`DenseNetwork::write_params`] order.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
    }
}

/// Per-layer outputs of a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }
}

impl DenseNetwork {
    /// Weights uniform in `±1/√fan_in`, zero biases, deterministic in `seed`.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::with_rng(layer_sizes, activation, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng<R: Rng + ?Sized>(layer_sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (inp, out) = (pair[0], pair[1]);
            let limit = 1.0 / (inp as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let data = (0..inp * out).map(|_| dist.sample(rng)).collect();
            weights.push(Matrix::from_vec(out, inp, data)?);
            biases.push(vec![0.0; out]);
        }
        Ok(DenseNetwork { layer_sizes: layer_sizes.to_vec(), weights, biases, activation })
    }

    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        Ok(DenseNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes.windows(2).map(|p| Matrix::zeros(p[1], p[0])).collect(),
            biases: layer_sizes.windows(2).map(|p| vec![0.0; p[1]]).collect(),
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Sum of squared weight entries (biases excluded).
    pub fn weight_sq_sum(&self) -> f64 {
        self.weights.iter().map(Matrix::frobenius_sq).sum()
    }

    /// Appends parameters layer by layer: weights (row-major) then biases.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
    }

    /// Reads parameters in [`write_params`](Self::write_params) order; returns the count consumed.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.num_params();
        if src.len() < need {
            return Err(Error::dim("DenseNetwork::read_params", need, src.len()));
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let wl = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&src[pos..pos + wl]);
            pos += wl;
            let bl = b.len();
            b.copy_from_slice(&src[pos..pos + bl]);
            pos += bl;
        }
        Ok(pos)
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim(
                "DenseNetwork::forward",
                format!("input with {} columns", self.input_dim()),
                format!("{}x{}", input.rows(), input.cols()),
            ));
        }
        Ok(())
    }

    fn layer(&self, i: usize, x: &Matrix) -> Matrix {
        let mut z = x.matmul_t(&self.weights[i]).expect("layer shapes chain by construction");
        let act = self.activation;
        let b = &self.biases[i];
        for r in 0..z.rows() {
            for (v, &bj) in z.row_mut(r).iter_mut().zip(b) {
                *v = act.apply(*v + bj);
            }
        }
        z
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = self.layer(0, input);
        for i in 1..self.weights.len() {
            x = self.layer(i, &x);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Matrix) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(input.clone());
        for i in 0..self.weights.len() {
            let next = self.layer(i, activations.last().expect("non-empty"));
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    /// Gradients of `⟨upstream, net(input)⟩` with respect to parameters and input.
    pub fn backward(&self, input: &Matrix, upstream: &Matrix) -> Result<NetGradient> {
        let trace = self.forward_trace(input)?;
        self.backward_from_trace(&trace, upstream)
    }

    pub fn backward_from_trace(&self, trace: &ForwardTrace, upstream: &Matrix) -> Result<NetGradient> {
        let out = trace.output();
        if upstream.shape() != out.shape() {
            return Err(Error::dim(
                "DenseNetwork::backward",
                format!("{}x{}", out.rows(), out.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let layers = self.weights.len();
        let mut d_weights = vec![Matrix::zeros(0, 0); layers];
        let mut d_biases = vec![Vec::new(); layers];
        let mut grad = upstream.clone();
        for i in (0..layers).rev() {
            let y = &trace.activations[i + 1];
            let act = self.activation;
            for (g, &yv) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *g *= act.derivative_from_output(yv);
            }
            d_weights[i] = grad.t_matmul(&trace.activations[i])?;
            let mut db = vec![0.0; grad.cols()];
            for r in 0..grad.rows() {
                for (acc, &g) in db.iter_mut().zip(grad.row(r)) {
                    *acc += g;
                }
            }
            d_biases[i] = db;
            grad = grad.matmul(&self.weights[i])?;
        }
        Ok(NetGradient { d_weights, d_biases, d_input: grad })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar_net(w: f64, b: f64, act: Activation) -> DenseNetwork {
        let mut net = DenseNetwork::zeros(&[1, 1], act).unwrap();
        net.weights_mut()[0][(0, 0)] = w;
        net.biases_mut()[0][0] = b;
        net
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = DenseNetwork::new(&[3, 5, 2], Activation::Tanh, 7).unwrap();
        let b = DenseNetwork::new(&[3, 5, 2], Activation::Tanh, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights()[0].shape(), (5, 3));
        assert_eq!(a.weights()[1].shape(), (2, 5));
        assert!(a.biases().iter().flatten().all(|&v| v == 0.0));
        let limit = 1.0 / 3f64.sqrt();
        assert!(a.weights()[0].as_slice().iter().all(|v| v.abs() <= limit));
        assert_ne!(a, DenseNetwork::new(&[3, 5, 2], Activation::Tanh, 8).unwrap());
    }

    #[test]
    fn init_rejects_short_layer_list() {
        assert!(matches!(DenseNetwork::new(&[3], Activation::Tanh, 0), Err(Error::InvalidConfig(_))));
        assert!(DenseNetwork::new(&[3, 0, 1], Activation::Tanh, 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let input = Matrix::filled(4, 3, 0.7);
        let z = DenseNetwork::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
        assert_eq!(z.forward(&input).unwrap(), Matrix::zeros(4, 2));
        let s = DenseNetwork::zeros(&[3, 4, 2], Activation::Sigmoid).unwrap();
        assert_eq!(s.forward(&input).unwrap(), Matrix::filled(4, 2, 0.5));

        let one = scalar_net(1.0, 0.0, Activation::Tanh);
        let y = one.forward(&Matrix::row_vector(&[0.5])).unwrap();
        assert_relative_eq!(y[(0, 0)], 0.462_117_157_260_009_8, epsilon = 1e-15);

        assert!(matches!(z.forward(&Matrix::zeros(1, 2)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backward_examples() {
        let net = scalar_net(1.0, 0.0, Activation::Tanh);
        let g = net.backward(&Matrix::row_vector(&[0.0]), &Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(g.d_input[(0, 0)], 1.0);

        let net = DenseNetwork::new(&[3, 4, 2], Activation::Sigmoid, 1).unwrap();
        let input = Matrix::filled(5, 3, 0.3);
        let g = net.backward(&input, &Matrix::zeros(5, 2)).unwrap();
        assert!(g.d_input.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_weights.iter().all(|w| w.as_slice().iter().all(|&v| v == 0.0)));
        assert!(g.d_biases.iter().flatten().all(|&v| v == 0.0));

        assert!(net.backward(&input, &Matrix::zeros(5, 3)).is_err());
    }

    #[test]
    fn forward_backward_leave_network_untouched() {
        let net = DenseNetwork::new(&[2, 3, 1], Activation::Tanh, 3).unwrap();
        let before = net.clone();
        let x = Matrix::filled(2, 2, 0.4);
        net.forward(&x).unwrap();
        net.backward(&x, &Matrix::filled(2, 1, 1.0)).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn serde_round_trip_validates_shapes() {
        let net = DenseNetwork::new(&[2, 3, 1], Activation::Sigmoid, 9).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: DenseNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
        let broken = json.replace("\"layer_sizes\":[2,3,1]", "\"layer_sizes\":[2,4,1]");
        assert!(serde_json::from_str::<DenseNetwork>(&broken).is_err());
    }

    #[test]
    fn params_round_trip() {
        let net = DenseNetwork::new(&[2, 3, 2], Activation::Tanh, 5).unwrap();
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        assert_eq!(flat.len(), net.num_params());
        let mut other = DenseNetwork::zeros(&[2, 3, 2], Activation::Tanh).unwrap();
        assert_eq!(other.read_params(&flat).unwrap(), flat.len());
        assert_eq!(other, net);
    }

    proptest! {
        #[test]
        fn outputs_stay_in_activation_range(
            seed in 0u64..1000,
            x in prop::collection::vec(-50.0f64..50.0, 6),
            sigmoid in any::<bool>(),
        ) {
            let act = if sigmoid { Activation::Sigmoid } else { Activation::Tanh };
            let net = DenseNetwork::new(&[3, 4, 2], act, seed).unwrap();
            let y = net.forward(&Matrix::from_vec(2, 3, x).unwrap()).unwrap();
            let (lo, hi) = act.range();
            prop_assert!(y.as_slice().iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
