use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear decay from `eta0` to `eta_tau` over `tau` iterations, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub eta0: f64,
    pub eta_tau: f64,
    pub tau: u64,
}

impl LrSchedule {
    pub fn new(eta0: f64, eta_tau: f64, tau: u64) -> Result<Self> {
        let s = LrSchedule { eta0, eta_tau, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(eta: f64) -> Self {
        LrSchedule { eta0: eta, eta_tau: eta, tau: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta_tau > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rates must be positive (eta0={}, eta_tau={})",
                self.eta0, self.eta_tau
            )));
        }
        if self.eta_tau > self.eta0 {
            return Err(Error::InvalidConfig(format!(
                "eta_tau ({}) must not exceed eta0 ({})",
                self.eta_tau, self.eta0
            )));
        }
        if self.tau < 1 {
            return Err(Error::InvalidConfig("tau must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate at iteration `k` (0-based).
    pub fn lr_at(&self, k: u64) -> f64 {
        if k >= self.tau {
            return self.eta_tau;
        }
        let alpha = k as f64 / self.tau as f64;
        (1.0 - alpha) * self.eta0 + alpha * self.eta_tau
    }
}

pub fn lr_at(sched: &LrSchedule, k: u64) -> f64 {
    sched.lr_at(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        let s = LrSchedule::new(0.1, 0.001, 100).unwrap();
        assert_eq!(lr_at(&s, 0), 0.1);
        assert_eq!(lr_at(&s, 100), 0.001);
        assert_eq!(lr_at(&s, 1000), 0.001);
        assert_relative_eq!(lr_at(&s, 50), 0.0505, epsilon = 1e-15);
    }

    #[test]
    fn invalid_schedules() {
        assert!(LrSchedule::new(0.01, 0.1, 10).is_err());
        assert!(LrSchedule::new(0.1, 0.01, 0).is_err());
        assert!(LrSchedule::new(0.0, 0.0, 5).is_err());
    }

    proptest! {
        #[test]
        fn non_increasing_with_plateau(
            eta0 in 1e-4f64..1.0, frac in 0.001f64..1.0, tau in 1u64..500, k in 0u64..1000,
        ) {
            let s = LrSchedule::new(eta0, eta0 * frac, tau).unwrap();
            prop_assert!(s.lr_at(k + 1) <= s.lr_at(k) + 1e-18);
            if k >= tau {
                prop_assert_eq!(s.lr_at(k), eta0 * frac);
            }
        }
    }
}
