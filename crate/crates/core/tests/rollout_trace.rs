//! Input-gate rollout: which observation feeds the input network at each future step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnn_core::stnn::{InputSource, SpatialFeatureSet, StnnConfig, StnnModel, StnnVariant};
use stnn_core::Matrix;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn setup() -> (StnnModel, SpatialFeatureSet, Vec<Matrix>) {
    let (n, d, p, l, m) = (3, 2, 2, 4, 6);
    let mut cfg = StnnConfig::new(n, d, p, l, StnnVariant::InputGate, 4);
    cfg.c_out = 3;
    let mut model = StnnModel::new(cfg, m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in &mut model.params.states {
        *s = random_matrix(&mut rng, n, l, 0.7);
    }
    let w = SpatialFeatureSet::new(n, (0..p).map(|_| random_matrix(&mut rng, n, n, 0.5)).collect()).unwrap();
    let obs = (0..m).map(|_| random_matrix(&mut rng, n, d, 0.7)).collect();
    (model, w, obs)
}

/// `b([c(x) | s | W_1 s | W_2 s])` written out from the network pieces.
fn step(model: &StnnModel, w: &SpatialFeatureSet, s: &Matrix, x: &Matrix) -> Matrix {
    let c = model.params.c.as_ref().unwrap().forward(x).unwrap();
    let mut parts = vec![c, s.clone()];
    for wi in w.matrices() {
        parts.push(wi.matmul(s).unwrap());
    }
    let refs: Vec<&Matrix> = parts.iter().collect();
    model.params.b.forward(&Matrix::hstack(&refs).unwrap()).unwrap()
}

fn max_diff(x: &Matrix, y: &Matrix) -> f64 {
    x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn horizon_three_consumes_two_observations_then_own_prediction() {
    let (model, w, obs) = setup();
    let m = obs.len();
    let trace = model.predict_traced(&w, 3, &obs).unwrap();

    let sources: Vec<InputSource> = trace.iter().map(|s| s.input).collect();
    assert_eq!(
        sources,
        [InputSource::Observed { back: 1 }, InputSource::Observed { back: 0 }, InputSource::Predicted { step: 1 }]
    );
    assert_eq!(trace[0].input_value.as_ref(), Some(&obs[m - 2]));
    assert_eq!(trace[1].input_value.as_ref(), Some(&obs[m - 1]));
    assert_eq!(trace[2].input_value.as_ref(), Some(&trace[0].prediction));

    // Reference trace.
    let a = |s: &Matrix| model.params.a.forward(s).unwrap();
    let s_m = model.params.states.last().unwrap();
    let s1 = step(&model, &w, s_m, &obs[m - 2]);
    let s2 = step(&model, &w, &s1, &obs[m - 1]);
    let s3 = step(&model, &w, &s2, &a(&s1));
    for (got, want) in trace.iter().zip([&s1, &s2, &s3]) {
        assert!(max_diff(&got.state, want) <= 1e-12);
        assert!(max_diff(&got.prediction, &a(want)) <= 1e-12);
    }
}

#[test]
fn perturbing_an_input_moves_exactly_the_dependent_steps() {
    let (model, w, obs) = setup();
    let m = obs.len();
    let base = model.predict(&w, 3, &obs).unwrap();

    // x_m first enters at step 2.
    let mut later = obs.clone();
    later[m - 1] = later[m - 1].scale(-1.0);
    let moved = model.predict(&w, 3, &later).unwrap();
    assert_eq!(moved[0], base[0]);
    assert_ne!(moved[1], base[1]);

    // Anything older than x_{m-1} is never read.
    let mut older = obs.clone();
    older[0] = older[0].scale(-1.0);
    assert_eq!(model.predict(&w, 3, &older).unwrap(), base);
}
