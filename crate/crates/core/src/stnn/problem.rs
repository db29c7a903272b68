use super::{SpatialFeatureSet, StnnModel};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{train, LrSchedule, Objective, Optimizer, TrainConfig, TrainReport};

/// An STNN bound to its training series, ready for the generic training loop.
pub struct StnnProblem<'a> {
    pub model: StnnModel,
    data: &'a [Matrix],
    spatial: &'a SpatialFeatureSet,
}

impl<'a> StnnProblem<'a> {
    pub fn new(model: StnnModel, data: &'a [Matrix], spatial: &'a SpatialFeatureSet) -> Result<Self> {
        model.check_data(data, spatial)?;
        Ok(StnnProblem { model, data, spatial })
    }

    pub fn into_model(self) -> StnnModel {
        self.model
    }
}

impl Objective for StnnProblem<'_> {
    fn params(&self) -> Vec<f64> {
        self.model.params.to_flat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.model.params.set_flat(params)
    }

    fn batch_domain(&self) -> Vec<usize> {
        self.model.batch_domain().collect()
    }

    fn batch_loss_grad(&self, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let (loss, grad) = self.model.minibatch_loss_and_grad(self.data, self.spatial, batch)?;
        Ok((loss, grad.to_flat()))
    }

    fn full_loss(&self) -> Result<f64> {
        self.model.loss(self.data, self.spatial)
    }
}

/// Trains `model` on `data` and returns the trained model with its loss history.
pub fn fit_stnn(
    model: StnnModel,
    data: &[Matrix],
    spatial: &SpatialFeatureSet,
    optimizer: &mut dyn Optimizer,
    schedule: &LrSchedule,
    config: &TrainConfig,
) -> Result<(StnnModel, TrainReport)> {
    let mut problem = StnnProblem::new(model, data, spatial)?;
    let report = train(&mut problem, optimizer, schedule, config)?;
    Ok((problem.into_model(), report))
}
