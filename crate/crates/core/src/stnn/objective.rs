//! Loss functions and their exact gradients over networks and hidden states.

use super::{SpatialFeatureSet, StnnModel, StnnVariant};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::NetGradient;

/// Gradient of an STNN loss, one block per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct StnnGradient {
    pub a: NetGradient,
    pub b: NetGradient,
    pub c: Option<NetGradient>,
    pub states: Vec<Matrix>,
}

impl StnnGradient {
    /// Flattens in [`StnnParams::to_flat`](super::StnnParams::to_flat) order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.a.write_params(&mut out);
        self.b.write_params(&mut out);
        if let Some(c) = &self.c {
            c.write_params(&mut out);
        }
        for s in &self.states {
            out.extend_from_slice(s.as_slice());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Which terms enter a loss evaluation, with their weights.
struct Terms<'a> {
    obs: &'a [usize],
    obs_weight: f64,
    trans: &'a [usize],
    trans_weight: f64,
}

impl StnnModel {
    /// Full training loss: mean observation error over all steps plus mean
    /// transition error over the variant's transition range, plus the ℓ2 weight penalty.
    pub fn loss(&self, data: &[Matrix], w: &SpatialFeatureSet) -> Result<f64> {
        self.check_data(data, w)?;
        let (obs, trans) = self.full_indices();
        let terms = self.full_terms(&obs, &trans);
        Ok(self.evaluate(data, w, &terms, false)?.0)
    }

    pub fn loss_and_grad(&self, data: &[Matrix], w: &SpatialFeatureSet) -> Result<(f64, StnnGradient)> {
        self.check_data(data, w)?;
        let (obs, trans) = self.full_indices();
        let terms = self.full_terms(&obs, &trans);
        let (loss, grad) = self.evaluate(data, w, &terms, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    /// Loss restricted to the index set `batch`: both the observation and the
    /// transition term are averaged over `|batch|`. Indices are 0-based
    /// transition sources (`0..m-1`, or `1..m-1` for input-gate).
    pub fn minibatch_loss(&self, data: &[Matrix], w: &SpatialFeatureSet, batch: &[usize]) -> Result<f64> {
        self.check_data(data, w)?;
        self.check_batch(batch)?;
        let terms = Terms {
            obs: batch,
            obs_weight: 1.0 / batch.len() as f64,
            trans: batch,
            trans_weight: 1.0 / batch.len() as f64,
        };
        Ok(self.evaluate(data, w, &terms, false)?.0)
    }

    pub fn minibatch_loss_and_grad(
        &self,
        data: &[Matrix],
        w: &SpatialFeatureSet,
        batch: &[usize],
    ) -> Result<(f64, StnnGradient)> {
        self.check_data(data, w)?;
        self.check_batch(batch)?;
        let terms = Terms {
            obs: batch,
            obs_weight: 1.0 / batch.len() as f64,
            trans: batch,
            trans_weight: 1.0 / batch.len() as f64,
        };
        let (loss, grad) = self.evaluate(data, w, &terms, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    /// Valid minibatch indices for this model.
    pub fn batch_domain(&self) -> std::ops::Range<usize> {
        self.variant().transition_range(self.m())
    }

    fn check_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty minibatch".into()));
        }
        let domain = self.batch_domain();
        if let Some(t) = batch.iter().find(|t| !domain.contains(t)) {
            return Err(Error::InvalidInput(format!("minibatch index {t} outside {}..{}", domain.start, domain.end)));
        }
        Ok(())
    }

    fn full_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let m = self.m();
        ((0..m).collect(), self.variant().transition_range(m).collect())
    }

    fn full_terms<'a>(&self, obs: &'a [usize], trans: &'a [usize]) -> Terms<'a> {
        Terms { obs, obs_weight: 1.0 / obs.len() as f64, trans, trans_weight: 1.0 / trans.len() as f64 }
    }

    fn evaluate(
        &self,
        data: &[Matrix],
        w: &SpatialFeatureSet,
        terms: &Terms<'_>,
        want_grad: bool,
    ) -> Result<(f64, Option<StnnGradient>)> {
        let cfg = &self.config;
        let params = &self.params;
        let n = cfg.n;
        let states = &params.states;
        let mut d_states = if want_grad { vec![Matrix::zeros(n, cfg.l); states.len()] } else { Vec::new() };

        // Observation term: all selected steps stacked into one batch for `a`.
        let obs_in: Vec<&Matrix> = terms.obs.iter().map(|&t| &states[t]).collect();
        let obs_target: Vec<&Matrix> = terms.obs.iter().map(|&t| &data[t]).collect();
        let a_in = Matrix::vstack(&obs_in)?;
        let a_trace = params.a.forward_trace(&a_in)?;
        let a_res = a_trace.output().sub(&Matrix::vstack(&obs_target)?)?;
        let mut loss = terms.obs_weight * a_res.frobenius_sq();

        let a_grad = if want_grad {
            let g = params.a.backward_from_trace(&a_trace, &a_res.scale(2.0 * terms.obs_weight))?;
            for (k, &t) in terms.obs.iter().enumerate() {
                d_states[t].axpy(1.0, &g.d_input.row_block(k * n, (k + 1) * n)?)?;
            }
            Some(g)
        } else {
            None
        };

        // Transition term.
        let gated = cfg.variant == StnnVariant::InputGate;
        let c_in = if gated {
            let prev: Vec<&Matrix> = terms.trans.iter().map(|&t| &data[t - 1]).collect();
            Some(Matrix::vstack(&prev)?)
        } else {
            None
        };
        let c_trace = match (&params.c, &c_in) {
            (Some(c), Some(x)) => Some(c.forward_trace(x)?),
            _ => None,
        };
        let mut b_rows = Vec::with_capacity(terms.trans.len());
        for (k, &t) in terms.trans.iter().enumerate() {
            let coupled = match cfg.variant {
                StnnVariant::Classic => w.superpose(&states[t])?,
                StnnVariant::Augmented => w.augment(&states[t])?,
                StnnVariant::InputGate => {
                    let gate =
                        c_trace.as_ref().expect("input-gate has network c").output().row_block(k * n, (k + 1) * n)?;
                    Matrix::hstack(&[&gate, &w.augment(&states[t])?])?
                }
            };
            b_rows.push(coupled);
        }
        let b_in = Matrix::vstack(&b_rows.iter().collect::<Vec<_>>())?;
        let b_target: Vec<&Matrix> = terms.trans.iter().map(|&t| &states[t + 1]).collect();
        let b_trace = params.b.forward_trace(&b_in)?;
        let b_res = b_trace.output().sub(&Matrix::vstack(&b_target)?)?;
        loss += terms.trans_weight * b_res.frobenius_sq();

        let reg = cfg.reg_l2;
        if reg > 0.0 {
            loss += reg * params.weight_sq_sum();
        }

        if !want_grad {
            return Ok((loss, None));
        }

        let upstream = b_res.scale(2.0 * terms.trans_weight);
        let b_grad = params.b.backward_from_trace(&b_trace, &upstream)?;
        let gate_width = if gated { cfg.c_out } else { 0 };
        let mut d_gate_rows = Vec::new();
        for (k, &t) in terms.trans.iter().enumerate() {
            let rows = b_grad.d_input.row_block(k * n, (k + 1) * n)?;
            let d_state = match cfg.variant {
                StnnVariant::Classic => w.superpose_adjoint(&rows)?,
                StnnVariant::Augmented => w.augment_adjoint(&rows, cfg.l)?,
                StnnVariant::InputGate => {
                    d_gate_rows.push(rows.col_block(0, gate_width)?);
                    let aug = rows.col_block(gate_width, rows.cols())?;
                    w.augment_adjoint(&aug, cfg.l)?
                }
            };
            d_states[t].axpy(1.0, &d_state)?;
            // s_{t+1} is the regression target of the transition.
            d_states[t + 1].axpy(-1.0, &upstream.row_block(k * n, (k + 1) * n)?)?;
        }

        let c_grad = match (&params.c, &c_trace) {
            (Some(c), Some(trace)) => {
                let up = Matrix::vstack(&d_gate_rows.iter().collect::<Vec<_>>())?;
                Some(c.backward_from_trace(trace, &up)?)
            }
            _ => None,
        };

        let mut grad = StnnGradient { a: a_grad.expect("computed above"), b: b_grad, c: c_grad, states: d_states };
        if reg > 0.0 {
            add_weight_decay(&mut grad.a, &params.a, reg);
            add_weight_decay(&mut grad.b, &params.b, reg);
            if let (Some(g), Some(c)) = (&mut grad.c, &params.c) {
                add_weight_decay(g, c, reg);
            }
        }
        Ok((loss, Some(grad)))
    }
}

fn add_weight_decay(g: &mut NetGradient, net: &crate::net::DenseNetwork, reg: f64) {
    for (dw, w) in g.d_weights.iter_mut().zip(net.weights()) {
        dw.axpy(2.0 * reg, w).expect("gradient mirrors network shapes");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, DenseNetwork};
    use crate::stnn::{StnnConfig, StnnParams};
    use approx::assert_relative_eq;

    fn scalar_zero_model(variant: StnnVariant, m: usize) -> StnnModel {
        let cfg = StnnConfig::new(1, 1, 0, 1, variant, 0);
        let params = StnnParams {
            a: DenseNetwork::zeros(&cfg.a_sizes(), Activation::Tanh).unwrap(),
            b: DenseNetwork::zeros(&cfg.b_sizes(), Activation::Tanh).unwrap(),
            c: cfg.c_sizes().map(|s| DenseNetwork::zeros(&s, Activation::Tanh).unwrap()),
            states: vec![Matrix::zeros(1, 1); m],
        };
        StnnModel::from_parts(cfg, params).unwrap()
    }

    fn scalars(v: &[f64]) -> Vec<Matrix> {
        v.iter().map(|&x| Matrix::row_vector(&[x])).collect()
    }

    #[test]
    fn hand_computed_classic_loss() {
        let model = scalar_zero_model(StnnVariant::Classic, 2);
        let w = SpatialFeatureSet::empty(1);
        let data = scalars(&[1.0, 0.0]);
        assert_relative_eq!(model.loss(&data, &w).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(model.minibatch_loss(&data, &w, &[0]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn minibatch_rejects_bad_index_sets() {
        let model = scalar_zero_model(StnnVariant::Classic, 3);
        let w = SpatialFeatureSet::empty(1);
        let data = scalars(&[0.1, 0.2, 0.3]);
        assert!(matches!(model.minibatch_loss(&data, &w, &[]), Err(Error::InvalidInput(_))));
        assert!(model.minibatch_loss(&data, &w, &[2]).is_err());
        let gated = scalar_zero_model(StnnVariant::InputGate, 3);
        assert!(gated.minibatch_loss(&data, &w, &[0]).is_err());
        assert!(gated.minibatch_loss(&data, &w, &[1]).is_ok());
    }

    #[test]
    fn minibatch_is_order_invariant() {
        let cfg = StnnConfig::new(2, 1, 1, 3, StnnVariant::Augmented, 5);
        let model = StnnModel::new(cfg, 6).unwrap();
        let w = SpatialFeatureSet::new(2, vec![Matrix::identity(2)]).unwrap();
        let data: Vec<Matrix> = (0..6).map(|t| Matrix::filled(2, 1, 0.1 * t as f64 - 0.2)).collect();
        let a = model.minibatch_loss(&data, &w, &[0, 3, 4]).unwrap();
        let b = model.minibatch_loss(&data, &w, &[4, 0, 3]).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn regularization_adds_weight_norm_linearly() {
        let mut cfg = StnnConfig::new(2, 1, 1, 3, StnnVariant::Classic, 8);
        cfg.a_hidden = vec![4];
        let model = StnnModel::new(cfg.clone(), 4).unwrap();
        let w = SpatialFeatureSet::new(2, vec![Matrix::identity(2)]).unwrap();
        let data: Vec<Matrix> = (0..4).map(|t| Matrix::filled(2, 1, 0.1 * t as f64)).collect();
        let base = model.loss(&data, &w).unwrap();
        let mut r1 = model.clone();
        r1.config.reg_l2 = 0.01;
        let mut r2 = model.clone();
        r2.config.reg_l2 = 0.02;
        let wsq = model.params.weight_sq_sum();
        let l1 = r1.loss(&data, &w).unwrap();
        let l2 = r2.loss(&data, &w).unwrap();
        assert_relative_eq!(l1 - base, 0.01 * wsq, epsilon = 1e-12);
        assert_relative_eq!(l2 - l1, 0.01 * wsq, epsilon = 1e-12);
    }

    #[test]
    fn last_state_gradient_has_no_source_term() {
        // s_m only receives the observation residual and the t=m-1 target residual.
        let cfg = StnnConfig::new(2, 1, 1, 2, StnnVariant::Classic, 3);
        let model = StnnModel::new(cfg, 4).unwrap();
        let w = SpatialFeatureSet::new(2, vec![Matrix::identity(2).scale(0.5)]).unwrap();
        let data: Vec<Matrix> = (0..4).map(|t| Matrix::filled(2, 1, 0.2 * t as f64 - 0.3)).collect();
        let (_, grad) = model.loss_and_grad(&data, &w).unwrap();

        let m = 4.0;
        let s_last = &model.params.states[3];
        let obs_res = model.params.a.forward(s_last).unwrap().sub(&data[3]).unwrap();
        let obs_part = model.params.a.backward(s_last, &obs_res.scale(2.0 / m)).unwrap().d_input;
        let prev = model.transition(&model.params.states[2], None, &w).unwrap();
        let target_part = prev.sub(s_last).unwrap().scale(-2.0 / (m - 1.0));
        let expected = obs_part.add(&target_part).unwrap();
        for (g, e) in grad.states[3].as_slice().iter().zip(expected.as_slice()) {
            assert_relative_eq!(g, e, epsilon = 1e-14);
        }
    }
}
