//! Closed-form curve families fitted to a single series `y(x)`.
//!
//! * exponential: `Σ a_i e^{b_i x}`, coefficients `[a_1, b_1, ..., a_k, b_k]`
//! * gaussian: `Σ a_i e^{-((x - b_i)/c_i)²}`, coefficients `[a_1, b_1, c_1, ...]`
//! * polynomial: `Σ a_i x^i`, coefficients `[a_0, ..., a_n]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions, LmResult};
use crate::error::{Error, Result};
use crate::linalg::{least_squares_qr, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFamily {
    Exponential,
    Gaussian,
    Polynomial,
}

impl CurveFamily {
    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::Exponential => "exponential",
            CurveFamily::Gaussian => "gaussian",
            CurveFamily::Polynomial => "polynomial",
        }
    }
}

impl std::str::FromStr for CurveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(CurveFamily::Exponential),
            "gaussian" | "gauss" => Ok(CurveFamily::Gaussian),
            "polynomial" | "poly" => Ok(CurveFamily::Polynomial),
            other => Err(Error::InvalidConfig(format!("unknown curve family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub family: CurveFamily,
    /// Number of terms, or the degree for polynomials.
    pub k: usize,
    pub coefficients: Vec<f64>,
    pub residual_rmse: f64,
}

impl CurveFit {
    pub fn validate(&self) -> Result<()> {
        let expected = match self.family {
            CurveFamily::Exponential => 2 * self.k,
            CurveFamily::Gaussian => 3 * self.k,
            CurveFamily::Polynomial => self.k + 1,
        };
        if self.coefficients.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "{} fit with k={} needs {expected} coefficients, got {}",
                self.family.name(),
                self.k,
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if self.family == CurveFamily::Gaussian && self.coefficients.chunks(3).any(|t| !(t[2] > 0.0)) {
            return Err(Error::InvalidParameter("gaussian widths must be positive".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        curve_eval(self, x)
    }
}

pub fn curve_eval(fit: &CurveFit, x: f64) -> f64 {
    let c = &fit.coefficients;
    match fit.family {
        CurveFamily::Exponential => c.chunks(2).map(|t| t[0] * (t[1] * x).exp()).sum(),
        CurveFamily::Gaussian => c
            .chunks(3)
            .map(|t| {
                let z = (x - t[1]) / t[2];
                t[0] * (-z * z).exp()
            })
            .sum(),
        CurveFamily::Polynomial => c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
    }
}

fn check_xy(xs: &[f64], ys: &[f64], need: usize, what: &str) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::dim("curve fit", format!("{} y values", xs.len()), ys.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("curve data must be finite".into()));
    }
    if xs.len() < need {
        return Err(Error::InvalidInput(format!("{what} needs at least {need} points, got {}", xs.len())));
    }
    Ok(())
}

fn rmse_of(fit: &CurveFit, xs: &[f64], ys: &[f64]) -> f64 {
    let sse: f64 = xs.iter().zip(ys).map(|(&x, &y)| (curve_eval(fit, x) - y).powi(2)).sum();
    (sse / xs.len() as f64).sqrt()
}

/// Least-squares polynomial through QR of the Vandermonde matrix.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], degree: usize) -> Result<CurveFit> {
    check_xy(xs, ys, degree + 1, "polynomial fit")?;
    let mut v = Matrix::zeros(xs.len(), degree + 1);
    for (i, &x) in xs.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..=degree {
            v[(i, j)] = p;
            p *= x;
        }
    }
    let coefficients = least_squares_qr(&v, ys)?;
    let mut fit = CurveFit { family: CurveFamily::Polynomial, k: degree, coefficients, residual_rmse: 0.0 };
    fit.residual_rmse = rmse_of(&fit, xs, ys);
    Ok(fit)
}

const MIN_STARTS: usize = 6;

fn lm_options() -> LmOptions {
    LmOptions { max_iter: 2000, ..LmOptions::default() }
}

/// Runs LM from every start and keeps the lowest residual; errors only when no start made progress.
#[allow(clippy::too_many_arguments)]
fn best_of_starts<R, J>(
    family: CurveFamily,
    k: usize,
    starts: Vec<Vec<f64>>,
    xs: &[f64],
    ys: &[f64],
    residual: R,
    jacobian: J,
    finish: impl Fn(Vec<f64>) -> Vec<f64>,
) -> Result<CurveFit>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Matrix,
{
    let opts = lm_options();
    let mut best: Option<LmResult> = None;
    let mut any_progress = false;
    for s in &starts {
        let out = levenberg_marquardt(&residual, &jacobian, s, &opts);
        any_progress |= out.improved() || out.sse <= 1e-24;
        if best.as_ref().is_none_or(|b| out.sse < b.sse) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");
    let mut fit = CurveFit { family, k, coefficients: finish(best.x), residual_rmse: 0.0 };
    fit.residual_rmse = if best.sse.is_finite() { rmse_of(&fit, xs, ys) } else { f64::INFINITY };
    if !any_progress || !fit.residual_rmse.is_finite() {
        return Err(Error::NoConvergence { best: Box::new(fit) });
    }
    Ok(fit)
}

/// Amplitudes for fixed rates by linear least squares; falls back to a flat split.
fn amplitudes_for_rates(xs: &[f64], ys: &[f64], rates: &[f64]) -> Vec<f64> {
    let mut basis = Matrix::zeros(xs.len(), rates.len());
    for (i, &x) in xs.iter().enumerate() {
        for (j, &b) in rates.iter().enumerate() {
            basis[(i, j)] = (b * x).exp();
        }
    }
    match least_squares_qr(&basis, ys) {
        Ok(a) if a.iter().all(|v| v.is_finite()) => a,
        _ => {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            vec![mean / rates.len() as f64; rates.len()]
        }
    }
}

/// Multi-term exponential fit; rates are seeded from the log-slope between the endpoints.
pub fn fit_exponential(xs: &[f64], ys: &[f64], k: usize, seed: u64) -> Result<CurveFit> {
    if k == 0 {
        return Err(Error::InvalidConfig("exponential fit needs k >= 1".into()));
    }
    check_xy(xs, ys, 2 * k, "exponential fit")?;
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let (y0, y1) = (ys[0], ys[ys.len() - 1]);
    let span = (x1 - x0).abs().max(1e-12);
    let slope = if y0 * y1 > 0.0 { (y1.abs().ln() - y0.abs().ln()) / (x1 - x0) } else { 0.0 };
    let base = if slope.abs() > 1e-9 { slope } else { 1.0 / span };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rate_sets: Vec<Vec<f64>> = Vec::new();
    for mult in [1.0, 0.5, 1.5, 0.8, 1.2, -1.0] {
        rate_sets.push((0..k).map(|i| base * mult * (1.0 + 0.5 * i as f64) - 0.1 * i as f64 / span).collect());
    }
    while rate_sets.len() < MIN_STARTS + 2 {
        rate_sets.push((0..k).map(|_| base * rng.gen_range(-2.0..2.0)).collect());
    }
    let starts: Vec<Vec<f64>> = rate_sets
        .iter()
        .map(|rates| {
            let amps = amplitudes_for_rates(xs, ys, rates);
            amps.iter().zip(rates).flat_map(|(&a, &b)| [a, b]).collect()
        })
        .collect();

    let residual = |p: &[f64]| -> Vec<f64> {
        xs.iter().zip(ys).map(|(&x, &y)| p.chunks(2).map(|t| t[0] * (t[1] * x).exp()).sum::<f64>() - y).collect()
    };
    let jacobian = |p: &[f64]| -> Matrix {
        let mut j = Matrix::zeros(xs.len(), p.len());
        for (i, &x) in xs.iter().enumerate() {
            for (t, pair) in p.chunks(2).enumerate() {
                let e = (pair[1] * x).exp();
                j[(i, 2 * t)] = e;
                j[(i, 2 * t + 1)] = pair[0] * x * e;
            }
        }
        j
    };
    best_of_starts(CurveFamily::Exponential, k, starts, xs, ys, residual, jacobian, |p| p)
}

/// Indices of strict-or-plateau local maxima, largest first.
fn local_maxima(ys: &[f64]) -> Vec<usize> {
    let n = ys.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || ys[i] >= ys[i - 1];
            let right = i + 1 == n || ys[i] >= ys[i + 1];
            left && right && ys[i] > 0.0
        })
        .collect();
    idx.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]).then(a.cmp(&b)));
    idx
}

/// Width at half maximum around `peak`, converted to the `c` parameter.
fn half_width(xs: &[f64], ys: &[f64], peak: usize) -> f64 {
    let half = ys[peak] / 2.0;
    let mut lo = peak;
    while lo > 0 && ys[lo] > half {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < ys.len() && ys[hi] > half {
        hi += 1;
    }
    let fwhm = (xs[hi] - xs[lo]).abs();
    // FWHM = 2 c √ln2.
    let c = fwhm / (2.0 * std::f64::consts::LN_2.sqrt());
    let span = (xs[xs.len() - 1] - xs[0]).abs();
    if c > 0.0 {
        c
    } else {
        (span / 10.0).max(1e-3)
    }
}

/// Sum-of-gaussians fit with peaks seeded at the `k` largest local maxima.
pub fn fit_gaussian(xs: &[f64], ys: &[f64], k: usize, seed: u64) -> Result<CurveFit> {
    if k == 0 {
        return Err(Error::InvalidConfig("gaussian fit needs k >= 1".into()));
    }
    check_xy(xs, ys, 3 * k, "gaussian fit")?;
    if !ys.iter().any(|&y| y > 0.0) {
        return Err(Error::InvalidInput("gaussian fit needs some positive values to seed peaks".into()));
    }
    let mut peaks = local_maxima(ys);
    // Fewer maxima than terms: spread the remaining centres over the range.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while peaks.len() < k {
        peaks.push(rng.gen_range(0..xs.len()));
    }
    peaks.truncate(k);

    let span = (xs[xs.len() - 1] - xs[0]).abs().max(1e-12);
    let base: Vec<[f64; 3]> = peaks.iter().map(|&p| [ys[p].max(1e-12), xs[p], half_width(xs, ys, p)]).collect();
    let mut starts = Vec::new();
    for wmult in [1.0, 0.5, 2.0, 0.75, 1.5] {
        starts.push(base.iter().flat_map(|t| [t[0], t[1], t[2] * wmult]).collect::<Vec<_>>());
    }
    while starts.len() < MIN_STARTS + 2 {
        starts.push(
            base.iter()
                .flat_map(|t| {
                    [
                        t[0] * rng.gen_range(0.5..1.5),
                        t[1] + span * rng.gen_range(-0.1..0.1),
                        t[2] * rng.gen_range(0.3..3.0),
                    ]
                })
                .collect(),
        );
    }

    let residual = |p: &[f64]| -> Vec<f64> {
        if p.chunks(3).any(|t| t[2].abs() < 1e-12) {
            return vec![f64::INFINITY; xs.len()];
        }
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                p.chunks(3)
                    .map(|t| {
                        let z = (x - t[1]) / t[2];
                        t[0] * (-z * z).exp()
                    })
                    .sum::<f64>()
                    - y
            })
            .collect()
    };
    let jacobian = |p: &[f64]| -> Matrix {
        let mut j = Matrix::zeros(xs.len(), p.len());
        for (i, &x) in xs.iter().enumerate() {
            for (t, g) in p.chunks(3).enumerate() {
                let (a, b, c) = (g[0], g[1], g[2]);
                let z = (x - b) / c;
                let e = (-z * z).exp();
                j[(i, 3 * t)] = e;
                j[(i, 3 * t + 1)] = a * e * 2.0 * z / c;
                j[(i, 3 * t + 2)] = a * e * 2.0 * z * z / c;
            }
        }
        j
    };
    // Widths enter squared, so the sign is arbitrary; report them positive.
    let finish = |mut p: Vec<f64>| {
        for t in p.chunks_mut(3) {
            t[2] = t[2].abs();
        }
        p
    };
    best_of_starts(CurveFamily::Gaussian, k, starts, xs, ys, residual, jacobian, finish)
}

/// Fits the family with the term count (or degree) from `ks` that does best on a
/// chronological hold-out of the last `holdout` points, then refits on all data.
pub fn fit_select(
    family: CurveFamily,
    xs: &[f64],
    ys: &[f64],
    ks: &[usize],
    holdout: usize,
    seed: u64,
) -> Result<CurveFit> {
    let fit = |xs: &[f64], ys: &[f64], k: usize| match family {
        CurveFamily::Exponential => fit_exponential(xs, ys, k, seed),
        CurveFamily::Gaussian => fit_gaussian(xs, ys, k, seed),
        CurveFamily::Polynomial => fit_polynomial(xs, ys, k),
    };
    if ks.is_empty() {
        return Err(Error::InvalidConfig("no candidate term counts".into()));
    }
    if ks.len() == 1 || holdout == 0 || holdout >= xs.len() {
        return fit(xs, ys, ks[0]);
    }
    let cut = xs.len() - holdout;
    let mut best: Option<(f64, usize)> = None;
    for &k in ks {
        let Ok(f) = fit(&xs[..cut], &ys[..cut], k) else {
            continue;
        };
        let score = rmse_of(&f, &xs[cut..], &ys[cut..]);
        if score.is_finite() && best.is_none_or(|(s, _)| score < s) {
            best = Some((score, k));
        }
    }
    fit(xs, ys, best.map_or(ks[0], |(_, k)| k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn polynomial_hand_solved() {
        let fit = fit_polynomial(&[0.0, 1.0, 2.0], &[1.0, 2.0, 5.0], 2).unwrap();
        for (c, e) in fit.coefficients.iter().zip([1.0, 0.0, 1.0]) {
            assert!((c - e).abs() < 1e-12, "{:?}", fit.coefficients);
        }
        assert_relative_eq!(curve_eval(&fit, 3.0), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn polynomial_constant_and_interpolation() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let fit = fit_polynomial(&xs, &[7.0; 5], 3).unwrap();
        assert!((fit.coefficients[0] - 7.0).abs() < 1e-12);
        assert!(fit.coefficients[1..].iter().all(|c| c.abs() < 1e-12));

        let fit = fit_polynomial(&[0.0, 1.0, 3.0, 4.0], &[2.0, -1.0, 0.5, 8.0], 3).unwrap();
        assert!(fit.residual_rmse <= 1e-8);
    }

    #[test]
    fn polynomial_duplicate_points_are_singular() {
        let err = fit_polynomial(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 2).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn exponential_recovers_generator() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.5 * x).exp()).collect();
        let fit = fit_exponential(&xs, &ys, 1, 0).unwrap();
        assert_relative_eq!(fit.coefficients[0], 3.0, max_relative = 1e-3);
        assert_relative_eq!(fit.coefficients[1], -0.5, max_relative = 1e-3);
        assert_relative_eq!(curve_eval(&fit, 0.0), fit.coefficients[0]);
    }

    #[test]
    fn gaussian_recovers_generator() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 120.0 * (-((x - 27.0) / 8.0f64).powi(2)).exp()).collect();
        let fit = fit_gaussian(&xs, &ys, 1, 0).unwrap();
        for (c, e) in fit.coefficients.iter().zip([120.0, 27.0, 8.0]) {
            assert_relative_eq!(*c, e, max_relative = 1e-3);
        }
    }

    #[test]
    fn eval_identities() {
        let g = CurveFit { family: CurveFamily::Gaussian, k: 1, coefficients: vec![4.0, 2.0, 3.0], residual_rmse: 0.0 };
        assert_eq!(curve_eval(&g, 2.0), 4.0);
        assert_relative_eq!(curve_eval(&g, 5.0), 4.0 * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(curve_eval(&g, -1.0), 4.0 * (-1.0f64).exp(), max_relative = 1e-15);
        let e = CurveFit {
            family: CurveFamily::Exponential,
            k: 2,
            coefficients: vec![0.0, 1.3, 0.0, -2.0],
            residual_rmse: 0.0,
        };
        assert_eq!(curve_eval(&e, 11.0), 0.0);
    }

    #[test]
    fn gaussian_needs_positive_values() {
        let xs: Vec<f64> = (0..6).map(f64::from).collect();
        assert!(matches!(fit_gaussian(&xs, &[-1.0; 6], 1, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fits_are_deterministic() {
        let xs: Vec<f64> = (0..30).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 + x.sin() * 2.0 + 0.1 * x * x).collect();
        assert_eq!(fit_gaussian(&xs, &ys, 2, 9).unwrap(), fit_gaussian(&xs, &ys, 2, 9).unwrap());
        assert_eq!(fit_exponential(&xs, &ys, 2, 9).unwrap(), fit_exponential(&xs, &ys, 2, 9).unwrap());
    }

    #[test]
    fn validate_checks_coefficient_count() {
        let bad =
            CurveFit { family: CurveFamily::Gaussian, k: 2, coefficients: vec![1.0, 0.0, 1.0], residual_rmse: 0.0 };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn polynomial_is_least_squares_optimal(
            ys in prop::collection::vec(-10.0f64..10.0, 8),
            cand in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
            let fit = fit_polynomial(&xs, &ys, 2).unwrap();
            let other = CurveFit { coefficients: cand, ..fit.clone() };
            prop_assert!(fit.residual_rmse <= rmse_of(&other, &xs, &ys) + 1e-12);
        }
    }
}
