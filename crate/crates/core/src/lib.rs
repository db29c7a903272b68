//! Spatio-temporal forecasting with trainable hidden states.
//!
//! The crate holds the numerical core: a small dense linear-algebra layer,
//! fully-connected networks with exact gradients, the three STNN variants,
//! first-order optimizers, the baseline forecasters, data handling, and a
//! name-keyed registry of forecasters used by the command-line runner.

// `!(x > 0.0)` is used on purpose so NaN fails the check, and single-window
// range lists are a real input shape.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::single_range_in_vec_init)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod forecast;
pub mod linalg;
pub mod net;
pub mod optim;
pub mod stnn;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use net::{Activation, DenseNetwork};
pub use stnn::{SpatialFeatureSet, StnnConfig, StnnModel, StnnVariant};
