use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Separate min/max for every `(location, target)` channel.
    #[default]
    PerChannel,
    /// One min/max over all values.
    Global,
}

/// Affine min-max map into the output range of an activation.
///
/// Values outside the fitted `[min, max]` extrapolate linearly, so a test value
/// larger than anything seen in training lands above the target range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    pub lo: f64,
    pub hi: f64,
    /// `n·d` entries in row-major `(location, target)` order, or one for global mode.
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

/// Target interval for an activation: `[0, 1]` for sigmoid, `[-0.8, 0.8]` for tanh.
pub fn target_range(act: Activation) -> (f64, f64) {
    match act {
        Activation::Sigmoid => (0.0, 1.0),
        Activation::Tanh => (-0.8, 0.8),
    }
}

impl Normalizer {
    pub fn fit(series: &TimeSeries, mode: NormMode, act: Activation) -> Result<Self> {
        let channel_name = |c: usize| {
            let (j, k) = (c / series.d(), c % series.d());
            format!("{}:{}", series.locations()[j], series.targets()[k])
        };
        Self::fit_values(series.values(), mode, act, channel_name)
    }

    /// Fits on raw `n × d` matrices; `name` labels channels in errors.
    pub fn fit_values(
        values: &[Matrix],
        mode: NormMode,
        act: Activation,
        name: impl Fn(usize) -> String,
    ) -> Result<Self> {
        let first = values.first().ok_or_else(|| Error::InvalidInput("cannot fit a normalizer on no data".into()))?;
        let (n, d) = first.shape();
        let channels = match mode {
            NormMode::PerChannel => n * d,
            NormMode::Global => 1,
        };
        let mut mins = vec![f64::INFINITY; channels];
        let mut maxs = vec![f64::NEG_INFINITY; channels];
        for v in values {
            if v.shape() != (n, d) {
                return Err(Error::dim("Normalizer::fit", format!("{n}x{d}"), format!("{}x{}", v.rows(), v.cols())));
            }
            for (c, &x) in v.as_slice().iter().enumerate() {
                let c = if mode == NormMode::Global { 0 } else { c };
                mins[c] = mins[c].min(x);
                maxs[c] = maxs[c].max(x);
            }
        }
        for c in 0..channels {
            if !(maxs[c] > mins[c]) {
                let label = match mode {
                    NormMode::Global => "all values".to_string(),
                    NormMode::PerChannel => name(c),
                };
                return Err(Error::InvalidInput(format!(
                    "channel {label} is constant ({}); it cannot be min-max normalized",
                    mins[c]
                )));
            }
        }
        let (lo, hi) = target_range(act);
        Ok(Normalizer { mode, lo, hi, mins, maxs, n, d })
    }

    fn bounds(&self, c: usize) -> (f64, f64) {
        match self.mode {
            NormMode::PerChannel => (self.mins[c], self.maxs[c]),
            NormMode::Global => (self.mins[0], self.maxs[0]),
        }
    }

    fn check(&self, v: &Matrix) -> Result<()> {
        if v.shape() != (self.n, self.d) {
            return Err(Error::dim(
                "Normalizer",
                format!("{}x{}", self.n, self.d),
                format!("{}x{}", v.rows(), v.cols()),
            ));
        }
        Ok(())
    }

    pub fn normalize_matrix(&self, v: &Matrix) -> Result<Matrix> {
        self.check(v)?;
        let mut out = v.clone();
        for (c, x) in out.as_mut_slice().iter_mut().enumerate() {
            let (mn, mx) = self.bounds(c);
            *x = self.lo + (*x - mn) * (self.hi - self.lo) / (mx - mn);
        }
        Ok(out)
    }

    pub fn denormalize_matrix(&self, v: &Matrix) -> Result<Matrix> {
        self.check(v)?;
        let mut out = v.clone();
        for (c, x) in out.as_mut_slice().iter_mut().enumerate() {
            let (mn, mx) = self.bounds(c);
            *x = mn + (*x - self.lo) * (mx - mn) / (self.hi - self.lo);
        }
        Ok(out)
    }

    pub fn normalize(&self, values: &[Matrix]) -> Result<Vec<Matrix>> {
        values.iter().map(|v| self.normalize_matrix(v)).collect()
    }

    pub fn denormalize(&self, values: &[Matrix]) -> Result<Vec<Matrix>> {
        values.iter().map(|v| self.denormalize_matrix(v)).collect()
    }

    pub fn normalize_series(&self, s: &TimeSeries) -> Result<TimeSeries> {
        s.with_values(self.normalize(s.values())?)
    }

    pub fn denormalize_series(&self, s: &TimeSeries) -> Result<TimeSeries> {
        s.with_values(self.denormalize(s.values())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(vals: &[f64]) -> Vec<Matrix> {
        vals.iter().map(|&v| Matrix::filled(1, 1, v)).collect()
    }

    #[test]
    fn maps_to_unit_interval() {
        let v = col(&[2.0, 4.0, 6.0]);
        let nz = Normalizer::fit_values(&v, NormMode::PerChannel, Activation::Sigmoid, |_| "x".into()).unwrap();
        let out: Vec<f64> = nz.normalize(&v).unwrap().iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(out, vec![0.0, 0.5, 1.0]);
        assert!(nz.normalize_matrix(&Matrix::filled(1, 1, 8.0)).unwrap()[(0, 0)] > 1.0);
    }

    #[test]
    fn tanh_range_and_constant_channel() {
        let v = col(&[1.0, 3.0]);
        let nz = Normalizer::fit_values(&v, NormMode::Global, Activation::Tanh, |_| "x".into()).unwrap();
        assert_eq!(nz.normalize(&v).unwrap(), col(&[-0.8, 0.8]));
        let err =
            Normalizer::fit_values(&col(&[5.0, 5.0]), NormMode::PerChannel, Activation::Tanh, |_| "A:cases".into())
                .unwrap_err();
        assert!(err.to_string().contains("A:cases"), "{err}");
    }

    proptest! {
        #[test]
        fn inverse_roundtrip(vals in prop::collection::vec(0.0f64..1e5, 4..20)) {
            let v: Vec<Matrix> = vals.chunks(2).filter(|c| c.len() == 2)
                .map(|c| Matrix::from_vec(1, 2, c.to_vec()).unwrap()).collect();
            if let Ok(nz) = Normalizer::fit_values(&v, NormMode::PerChannel, Activation::Tanh, |c| c.to_string()) {
                let back = nz.denormalize(&nz.normalize(&v).unwrap()).unwrap();
                for (a, b) in back.iter().zip(&v) {
                    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                        prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
                    }
                }
            }
        }
    }
}
