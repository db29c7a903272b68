//! Analytic gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnn_core::baselines::{GruCell, GruPredictor};
use stnn_core::net::{Activation, DenseNetwork};
use stnn_core::stnn::{SpatialFeatureSet, StnnConfig, StnnModel, StnnVariant};
use stnn_core::Matrix;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;
/// Denominator floor so coordinates with (near-)zero gradient compare absolutely.
const FLOOR: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Worst relative error over all coordinates, with its index.
fn check(params: &[f64], grad: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> (f64, usize) {
    assert_eq!(params.len(), grad.len());
    let mut p = params.to_vec();
    let mut worst = (0.0, 0);
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + H;
        let up = loss(&p);
        p[i] = orig - H;
        let down = loss(&p);
        p[i] = orig;
        let e = rel_err(grad[i], (up - down) / (2.0 * H));
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn stnn_instance(variant: StnnVariant, seed: u64) -> (StnnModel, Vec<Matrix>, SpatialFeatureSet) {
    let (n, d, p, l, m) = (3, 2, 2, 4, 6);
    let mut cfg = StnnConfig::new(n, d, p, l, variant, seed);
    cfg.a_hidden = vec![5];
    cfg.b_hidden = vec![6];
    cfg.c_hidden = vec![3];
    cfg.c_out = 3;
    cfg.reg_l2 = 1e-3;
    let mut model = StnnModel::new(cfg, m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    // Larger hidden states than the default init so every activation is exercised.
    for s in &mut model.params.states {
        *s = random_matrix(&mut rng, n, l, 0.8);
    }
    let data = (0..m).map(|_| random_matrix(&mut rng, n, d, 0.8)).collect();
    let w = SpatialFeatureSet::new(n, (0..p).map(|_| random_matrix(&mut rng, n, n, 0.5)).collect()).unwrap();
    (model, data, w)
}

fn stnn_gradcheck(variant: StnnVariant) {
    for seed in [1, 2] {
        let (model, data, w) = stnn_instance(variant, seed);
        let (_, grad) = model.loss_and_grad(&data, &w).unwrap();
        let flat = model.params.to_flat();
        let mut probe = model.clone();
        let (worst, at) = check(&flat, &grad.to_flat(), |p| {
            probe.params.set_flat(p).unwrap();
            probe.loss(&data, &w).unwrap()
        });
        assert!(worst <= TOL, "{variant:?} seed {seed}: rel err {worst:.3e} at coordinate {at}");
    }
}

#[test]
fn stnn_classic_gradient() {
    stnn_gradcheck(StnnVariant::Classic);
}

#[test]
fn stnn_augmented_gradient() {
    stnn_gradcheck(StnnVariant::Augmented);
}

#[test]
fn stnn_input_gate_gradient() {
    stnn_gradcheck(StnnVariant::InputGate);
}

#[test]
fn stnn_minibatch_gradient() {
    for variant in [StnnVariant::Classic, StnnVariant::Augmented, StnnVariant::InputGate] {
        let (model, data, w) = stnn_instance(variant, 7);
        let batch = [4, 1, 3];
        let (_, grad) = model.minibatch_loss_and_grad(&data, &w, &batch).unwrap();
        let mut probe = model.clone();
        let (worst, at) = check(&model.params.to_flat(), &grad.to_flat(), |p| {
            probe.params.set_flat(p).unwrap();
            probe.minibatch_loss(&data, &w, &batch).unwrap()
        });
        assert!(worst <= TOL, "{variant:?}: rel err {worst:.3e} at {at}");
    }
}

#[test]
fn dense_network_gradient_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..24 {
        let act = if case % 2 == 0 { Activation::Tanh } else { Activation::Sigmoid };
        let sizes = [rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..4)];
        let net = DenseNetwork::new(&sizes, act, case).unwrap();
        let batch = rng.gen_range(1..4);
        let x = random_matrix(&mut rng, batch, sizes[0], 1.5);
        let up = random_matrix(&mut rng, batch, sizes[2], 1.0);
        let inner =
            |n: &DenseNetwork, x: &Matrix| stnn_core::linalg::dot(n.forward(x).unwrap().as_slice(), up.as_slice());

        let g = net.backward(&x, &up).unwrap();
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        let mut gflat = Vec::new();
        g.write_params(&mut gflat);
        let mut probe = net.clone();
        let (worst, at) = check(&flat, &gflat, |p| {
            probe.read_params(p).unwrap();
            inner(&probe, &x)
        });
        assert!(worst <= TOL, "case {case} params: {worst:.3e} at {at}");

        let (worst, at) = check(x.as_slice(), g.d_input.as_slice(), |p| {
            inner(&net, &Matrix::from_vec(batch, sizes[0], p.to_vec()).unwrap())
        });
        assert!(worst <= TOL, "case {case} input: {worst:.3e} at {at}");
    }
}

#[test]
fn gru_unrolled_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20u64 {
        let (dim, hidden, window, batch) =
            (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..4));
        let p = GruPredictor::new(dim, hidden, 3, window, Activation::Tanh, case).unwrap();
        let windows: Vec<Matrix> = (0..window).map(|_| random_matrix(&mut rng, batch, dim, 0.9)).collect();
        let target = random_matrix(&mut rng, batch, dim, 0.7);
        let (_, g) = p.loss_and_grad(&windows, &target).unwrap();
        let mut probe = p.clone();
        let (worst, at) = check(&p.to_flat(), &g.to_flat(), |params| {
            probe.set_flat(params).unwrap();
            probe.forward(&windows).unwrap().sub(&target).unwrap().frobenius_sq() / batch as f64
        });
        assert!(worst <= TOL, "case {case}: {worst:.3e} at {at}");
    }
}

#[test]
fn gru_zero_cell_decay() {
    let cell = GruCell::zeros(1, 2).unwrap();
    let readout = DenseNetwork::new(&[2, 2, 1], Activation::Tanh, 0).unwrap();
    let p = GruPredictor::from_parts(cell, readout, 4).unwrap();
    let h0 = Matrix::row_vector(&[0.6, -0.9]);
    let windows = vec![Matrix::row_vector(&[0.25]); 4];
    let h = p.hidden_after(&windows, &h0).unwrap();
    assert_eq!(h, h0.scale(0.5f64.powi(4)));
}
