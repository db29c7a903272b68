//! Multi-step forecasting by iterating the state transition past the last observation.

use super::{SpatialFeatureSet, StnnModel, StnnVariant};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Where the input network of an input-gate step got its observation from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSource {
    /// Classic and augmented variants take no observation input.
    None,
    /// An observed value: `back = 1` is `x_{m-1}`, `back = 0` is `x_m`.
    Observed { back: usize },
    /// The model's own prediction `a(s_{m+step})` (1-based step).
    Predicted { step: usize },
}

/// One instrumented rollout step, `step` being 1-based (`s_{m+step}`).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub step: usize,
    pub input: InputSource,
    /// The matrix actually fed to the input network, if any.
    pub input_value: Option<Matrix>,
    pub state: Matrix,
    pub prediction: Matrix,
}

impl StnnModel {
    /// Forecasts `horizon` future observations from the last hidden state.
    ///
    /// `recent_obs` holds the most recent observations in time order; the
    /// input-gate variant requires at least the last two (`x_{m-1}`, `x_m`).
    pub fn predict(&self, w: &SpatialFeatureSet, horizon: usize, recent_obs: &[Matrix]) -> Result<Vec<Matrix>> {
        Ok(self.predict_traced(w, horizon, recent_obs)?.into_iter().map(|s| s.prediction).collect())
    }

    /// Same as [`predict`](Self::predict), also reporting which input fed every step.
    pub fn predict_traced(
        &self,
        w: &SpatialFeatureSet,
        horizon: usize,
        recent_obs: &[Matrix],
    ) -> Result<Vec<RolloutStep>> {
        if horizon < 1 {
            return Err(Error::InvalidInput("prediction horizon must be at least 1".into()));
        }
        let cfg = &self.config;
        if w.n() != cfg.n || w.p() != cfg.p {
            return Err(Error::dim(
                "spatial features",
                format!("p={} matrices of {}x{}", cfg.p, cfg.n, cfg.n),
                format!("p={} matrices of {}x{}", w.p(), w.n(), w.n()),
            ));
        }
        let gated = cfg.variant == StnnVariant::InputGate;
        // Observation sequence consumed by the input network: x_{m-1}, x_m, a(s_{m+1}), ...
        let mut inputs: Vec<(InputSource, Matrix)> = Vec::new();
        if gated {
            if recent_obs.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "input-gate prediction needs the last two observations, got {}",
                    recent_obs.len()
                )));
            }
            let k = recent_obs.len();
            for (back, x) in [(1, &recent_obs[k - 2]), (0, &recent_obs[k - 1])] {
                if x.shape() != (cfg.n, cfg.d) {
                    return Err(Error::dim(
                        "observation",
                        format!("{}x{}", cfg.n, cfg.d),
                        format!("{}x{}", x.rows(), x.cols()),
                    ));
                }
                inputs.push((InputSource::Observed { back }, x.clone()));
            }
        }

        let mut state =
            self.params.states.last().ok_or_else(|| Error::InvalidInput("model has no hidden states".into()))?.clone();
        let mut steps = Vec::with_capacity(horizon);
        for step in 1..=horizon {
            let (source, input_value) = if gated {
                let (src, x) = &inputs[step - 1];
                (*src, Some(x.clone()))
            } else {
                (InputSource::None, None)
            };
            state = self.transition(&state, input_value.as_ref(), w)?;
            let prediction = self.params.a.forward(&state)?;
            if gated {
                inputs.push((InputSource::Predicted { step }, prediction.clone()));
            }
            steps.push(RolloutStep { step, input: source, input_value, state: state.clone(), prediction });
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, DenseNetwork};
    use crate::stnn::StnnConfig;

    #[test]
    fn zero_state_network_gives_constant_forecast() {
        let cfg = StnnConfig::new(2, 1, 1, 3, StnnVariant::Classic, 1);
        let mut model = StnnModel::new(cfg, 4).unwrap();
        model.params.b = DenseNetwork::zeros(&model.config.b_sizes(), Activation::Tanh).unwrap();
        let w = SpatialFeatureSet::new(2, vec![Matrix::identity(2)]).unwrap();
        let preds = model.predict_traced(&w, 4, &[]).unwrap();
        let at_zero = model.params.a.forward(&Matrix::zeros(2, 3)).unwrap();
        for s in &preds {
            assert_eq!(s.state, Matrix::zeros(2, 3));
            assert_eq!(s.prediction, at_zero);
            assert_eq!(s.input, InputSource::None);
        }
    }

    #[test]
    fn horizon_and_observation_requirements() {
        let cfg = StnnConfig::new(1, 1, 0, 2, StnnVariant::InputGate, 1);
        let model = StnnModel::new(cfg, 4).unwrap();
        let w = SpatialFeatureSet::empty(1);
        let x = Matrix::row_vector(&[0.1]);
        assert!(matches!(model.predict(&w, 0, &[x.clone(), x.clone()]), Err(Error::InvalidInput(_))));
        assert!(matches!(model.predict(&w, 2, std::slice::from_ref(&x)), Err(Error::InvalidInput(_))));
        assert_eq!(model.predict(&w, 2, &[x.clone(), x]).unwrap().len(), 2);
    }

    #[test]
    fn rollout_prefix_property() {
        let cfg = StnnConfig::new(2, 1, 1, 2, StnnVariant::InputGate, 6);
        let model = StnnModel::new(cfg, 5).unwrap();
        let w = SpatialFeatureSet::new(2, vec![Matrix::identity(2).scale(0.3)]).unwrap();
        let obs = vec![Matrix::filled(2, 1, 0.2), Matrix::filled(2, 1, -0.1)];
        let one = model.predict(&w, 1, &obs).unwrap();
        let five = model.predict(&w, 5, &obs).unwrap();
        assert_eq!(one[0], five[0]);
        assert_eq!(five, model.predict(&w, 5, &obs).unwrap());
    }
}
