//! Levenberg–Marquardt for small dense nonlinear least-squares problems.

use crate::linalg::{solve_linear, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once an accepted step improves the cost by less than this fraction.
    pub ftol: f64,
    /// Stop once the step is this small relative to the parameters.
    pub xtol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 500, ftol: 1e-15, xtol: 1e-14, lambda0: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub sse: f64,
    pub initial_sse: f64,
    pub iterations: usize,
}

impl LmResult {
    pub fn improved(&self) -> bool {
        self.sse < self.initial_sse
    }
}

fn sse(r: &[f64]) -> f64 {
    let v: f64 = r.iter().map(|e| e * e).sum();
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `‖r(x)‖²` given the residual map and its `m × n` Jacobian.
///
/// Non-finite residuals mark a point as infeasible and reject the step.
pub fn levenberg_marquardt<R, J>(residual: R, jacobian: J, x0: &[f64], opts: &LmOptions) -> LmResult
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Matrix,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    let mut cost = sse(&r);
    let initial_sse = cost;
    let mut lambda = opts.lambda0;
    let mut iterations = 0;
    if !cost.is_finite() {
        return LmResult { x, sse: cost, initial_sse, iterations };
    }

    while iterations < opts.max_iter && cost > 0.0 {
        iterations += 1;
        let jac = jacobian(&x);
        let jtj = jac.t_matmul(&jac).expect("jacobian shapes agree");
        let mut g = vec![0.0; n];
        for (i, ri) in r.iter().enumerate() {
            for (gj, &jij) in g.iter_mut().zip(jac.row(i)) {
                *gj += jij * ri;
            }
        }
        if g.iter().all(|v| v.abs() <= 1e-300) {
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut lhs = jtj.clone();
            for j in 0..n {
                lhs[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let Ok(step) = solve_linear(&lhs, &neg_g) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let r_trial = residual(&trial);
            let c_trial = sse(&r_trial);
            if c_trial < cost {
                let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_gain = (cost - c_trial) / cost;
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_gain < opts.ftol || step_norm <= opts.xtol * (x_norm + opts.xtol) {
                    return LmResult { x, sse: cost, initial_sse, iterations };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    LmResult { x, sse: cost, initial_sse, iterations }
}
