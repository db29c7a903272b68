//! SEIR compartment dynamics, RK4 integration and per-window least-squares fitting.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirParams {
    /// Effective contact rate (1/day).
    pub beta: f64,
    /// Exit rate from exposed to infectious (1/day).
    pub delta_e: f64,
    /// Removal rate of infectious persons (1/day).
    pub gamma: f64,
    /// Total population.
    pub population: f64,
}

impl SeirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.population > 0.0) || !self.population.is_finite() {
            return Err(Error::InvalidParameter(format!("population must be positive, got {}", self.population)));
        }
        for (name, v) in [("beta", self.beta), ("delta_e", self.delta_e), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    /// Time in days.
    pub t: f64,
}

impl SeirState {
    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    fn is_finite(&self) -> bool {
        self.s.is_finite() && self.e.is_finite() && self.i.is_finite() && self.r.is_finite()
    }

    fn offset(&self, k: &SeirRates, h: f64) -> SeirState {
        SeirState { s: self.s + h * k.s, e: self.e + h * k.e, i: self.i + h * k.i, r: self.r + h * k.r, t: self.t + h }
    }
}

/// Time derivatives of the four compartments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeirRates {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

pub fn seir_derivative(state: &SeirState, params: &SeirParams) -> Result<SeirRates> {
    if params.population == 0.0 {
        return Err(Error::InvalidParameter("population N must be nonzero".into()));
    }
    Ok(rates(state, params))
}

#[inline]
fn rates(x: &SeirState, p: &SeirParams) -> SeirRates {
    let infection = p.beta * x.s * x.i / p.population;
    let onset = p.delta_e * x.e;
    let removal = p.gamma * x.i;
    SeirRates { s: -infection, e: infection - onset, i: onset - removal, r: removal }
}

/// One classic fourth-order Runge–Kutta step of size `h`.
pub fn rk4_step(x: &SeirState, p: &SeirParams, h: f64) -> SeirState {
    let k1 = rates(x, p);
    let k2 = rates(&x.offset(&k1, h / 2.0), p);
    let k3 = rates(&x.offset(&k2, h / 2.0), p);
    let k4 = rates(&x.offset(&k3, h), p);
    SeirState {
        s: x.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
        e: x.e + h / 6.0 * (k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e),
        i: x.i + h / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
        r: x.r + h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        t: x.t + h,
    }
}

/// Integrates from `initial` and samples the state at every whole day up to `days`.
///
/// `dt` is rounded down to the nearest step that divides one day evenly.
pub fn seir_integrate(initial: &SeirState, params: &SeirParams, days: f64, dt: f64) -> Result<Vec<SeirState>> {
    params.validate()?;
    if !(dt > 0.0) || !(days >= dt) {
        return Err(Error::InvalidInput(format!("need dt > 0 and days >= dt (days={days}, dt={dt})")));
    }
    let substeps = (1.0 / dt).ceil().max(1.0) as usize;
    let h = 1.0 / substeps as f64;
    let whole_days = days.floor() as usize;
    let t0 = initial.t;
    let mut out = Vec::with_capacity(whole_days + 1);
    let mut x = *initial;
    out.push(x);
    for day in 1..=whole_days {
        for _ in 0..substeps {
            x = rk4_step(&x, params, h);
        }
        x.t = t0 + day as f64;
        if !x.is_finite() {
            return Err(Error::NonFiniteState { t: x.t });
        }
        out.push(x);
    }
    Ok(out)
}

/// `day,S,E,I,R` CSV of a trajectory.
pub fn trajectory_csv(traj: &[SeirState]) -> String {
    let mut out = String::from("day,S,E,I,R\n");
    for x in traj {
        let _ = writeln!(out, "{},{},{},{},{}", x.t, x.s, x.e, x.i, x.r);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeirFitOptions {
    /// Initial exposed count as a multiple of the initial infectious count.
    #[serde(default = "default_exposed_ratio")]
    pub exposed_ratio: f64,
    /// Integration step in days.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_exposed_ratio() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    0.1
}

impl Default for SeirFitOptions {
    fn default() -> Self {
        SeirFitOptions { exposed_ratio: default_exposed_ratio(), dt: default_dt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirWindowFit {
    pub start: usize,
    pub end: usize,
    pub params: SeirParams,
    pub initial: SeirState,
    pub rmse: f64,
}

impl SeirWindowFit {
    /// Simulated infectious counts for `days` whole days from the window start.
    pub fn simulate_infectious(&self, days: usize, dt: f64) -> Result<Vec<f64>> {
        if days == 0 {
            return Ok(vec![self.initial.i]);
        }
        Ok(seir_integrate(&self.initial, &self.params, days as f64, dt)?.iter().map(|x| x.i).collect())
    }
}

const RATE_MIN: f64 = 1e-6;
const RATE_MAX: f64 = 5.0;

fn to_params(z: &[f64], population: f64) -> SeirParams {
    let r = |v: f64| v.exp().clamp(RATE_MIN, RATE_MAX);
    SeirParams { beta: r(z[0]), delta_e: r(z[1]), gamma: r(z[2]), population }
}

/// Fits `(β, δ_e, γ)` independently on each window of an infectious-count series.
///
/// Each window starts from `I = observed[start]`, `E = exposed_ratio · I`,
/// `R = 0` and `S = N − E − I`. The search runs Nelder–Mead in log-rate space
/// from the best point of a coarse grid; the grid contains a near-extinction
/// candidate so the fit never loses to the all-zero prediction.
pub fn seir_fit(
    observed: &[f64],
    population: f64,
    windows: &[Range<usize>],
    options: &SeirFitOptions,
) -> Result<Vec<SeirWindowFit>> {
    if observed.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("all observations are zero".into()));
    }
    if let Some(v) = observed.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("observations must be finite and >= 0, got {v}")));
    }
    if !(population > 0.0) {
        return Err(Error::InvalidParameter(format!("population must be positive, got {population}")));
    }
    if windows.is_empty() {
        return Err(Error::InvalidInput("no fitting windows".into()));
    }
    windows.iter().map(|w| fit_window(observed, population, w.clone(), options)).collect()
}

fn fit_window(
    observed: &[f64],
    population: f64,
    window: Range<usize>,
    options: &SeirFitOptions,
) -> Result<SeirWindowFit> {
    if window.start >= window.end || window.end > observed.len() {
        return Err(Error::InvalidInput(format!(
            "window {}..{} does not fit a series of length {}",
            window.start,
            window.end,
            observed.len()
        )));
    }
    let obs = &observed[window.clone()];
    let i0 = obs[0];
    let e0 = options.exposed_ratio * i0;
    let initial = SeirState { s: (population - e0 - i0).max(0.0), e: e0, i: i0, r: 0.0, t: 0.0 };
    let days = obs.len() - 1;
    let sse = |z: &[f64]| -> f64 {
        let p = to_params(z, population);
        if days == 0 {
            return 0.0;
        }
        match seir_integrate(&initial, &p, days as f64, options.dt) {
            Ok(traj) => traj.iter().zip(obs).map(|(x, o)| (x.i - o).powi(2)).sum(),
            Err(_) => f64::INFINITY,
        }
    };

    const BETAS: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
    const DELTAS: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];
    const GAMMAS: [f64; 5] = [0.02, 0.05, 0.1, 0.2, 0.5];
    let mut candidates: Vec<[f64; 3]> = Vec::with_capacity(151);
    for &b in &BETAS {
        for &d in &DELTAS {
            for &g in &GAMMAS {
                candidates.push([b, d, g]);
            }
        }
    }
    // Near-extinction: I decays almost immediately.
    candidates.push([RATE_MIN, RATE_MIN, RATE_MAX]);

    let mut best_z = [0.0; 3];
    let mut best = f64::INFINITY;
    for c in &candidates {
        let z = [c[0].ln(), c[1].ln(), c[2].ln()];
        let v = sse(&z);
        if v < best {
            best = v;
            best_z = z;
        }
    }

    let opts = NelderMeadOptions { max_iter: 4000, ftol: 1e-14, xtol: 1e-9, step: 0.3 };
    let mut z = best_z.to_vec();
    // Restarting from the converged point rebuilds a fresh simplex and guards against collapse.
    for round in 0..4 {
        let step = if round == 0 { opts.step } else { 0.05 };
        let r = nelder_mead(sse, &z, &NelderMeadOptions { step, ..opts });
        if r.value <= best {
            best = r.value;
            z = r.x;
        }
    }

    let params = to_params(&z, population);
    Ok(SeirWindowFit { start: window.start, end: window.end, params, initial, rmse: (best / obs.len() as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example() -> (SeirState, SeirParams) {
        (
            SeirState { s: 999.0, e: 0.0, i: 1.0, r: 0.0, t: 0.0 },
            SeirParams { beta: 0.5, delta_e: 0.2, gamma: 0.1, population: 1000.0 },
        )
    }

    #[test]
    fn derivative_examples() {
        let (x, p) = example();
        let d = seir_derivative(&x, &p).unwrap();
        assert_relative_eq!(d.s, -0.4995, max_relative = 1e-12);
        assert_relative_eq!(d.e, 0.4995, max_relative = 1e-12);
        assert_relative_eq!(d.i, -0.1, max_relative = 1e-12);
        assert_relative_eq!(d.r, 0.1, max_relative = 1e-12);

        let x = SeirState { s: 500.0, e: 40.0, i: 30.0, r: 430.0, t: 0.0 };
        let d = seir_derivative(&x, &SeirParams { beta: 0.0, ..p }).unwrap();
        assert_eq!(d.s, 0.0);
        assert_relative_eq!(d.e, -0.2 * 40.0);

        assert!(matches!(seir_derivative(&x, &SeirParams { population: 0.0, ..p }), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn disease_free_state_is_constant() {
        let (_, p) = example();
        let x = SeirState { s: 1000.0, e: 0.0, i: 0.0, r: 0.0, t: 0.0 };
        let traj = seir_integrate(&x, &p, 30.0, 0.1).unwrap();
        assert_eq!(traj.len(), 31);
        assert!(traj.iter().all(|y| y.s == 1000.0 && y.e == 0.0 && y.i == 0.0 && y.r == 0.0));
        assert_eq!(traj[30].t, 30.0);
    }

    #[test]
    fn integrate_rejects_bad_steps() {
        let (x, p) = example();
        assert!(seir_integrate(&x, &p, 10.0, 0.0).is_err());
        assert!(seir_integrate(&x, &p, 0.05, 0.1).is_err());
    }

    #[test]
    fn fit_rejects_all_zero_series() {
        assert!(matches!(
            seir_fit(&[0.0; 10], 100.0, &[0..10], &SeirFitOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn trajectory_csv_header() {
        let (x, p) = example();
        let csv = trajectory_csv(&seir_integrate(&x, &p, 1.0, 0.5).unwrap());
        assert!(csv.starts_with("day,S,E,I,R\n0,999,0,1,0\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn conservation_and_monotonicity(
            beta in 0.0f64..2.0, delta in 0.0f64..1.0, gamma in 0.0f64..1.0,
            i0 in 0.0f64..100.0, e0 in 0.0f64..100.0,
        ) {
            let n = 1e4;
            let p = SeirParams { beta, delta_e: delta, gamma, population: n };
            let mut x = SeirState { s: n - i0 - e0, e: e0, i: i0, r: 0.0, t: 0.0 };
            for _ in 0..200 {
                let next = rk4_step(&x, &p, 0.1);
                prop_assert!((next.total() - n).abs() <= 1e-6 * n);
                prop_assert!(next.s <= x.s + 1e-9);
                prop_assert!(next.r >= x.r - 1e-9);
                x = next;
            }
        }
    }
}
