//! Comparison forecasters: time-regression network, GRU, curve fits and SEIR.

mod bpnn;
mod curve;
mod gru;
mod lm;
mod nelder_mead;
mod seir;

pub use bpnn::{bpnn_predict, bpnn_time, fit_bpnn, BpnnConfig, BpnnFit};
pub use curve::{curve_eval, fit_exponential, fit_gaussian, fit_polynomial, fit_select, CurveFamily, CurveFit};
pub use gru::{fit_gru, GateParams, GruCell, GruGradient, GruPredictor, GruProblem};
pub use lm::{levenberg_marquardt, LmOptions, LmResult};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use seir::{
    rk4_step, seir_derivative, seir_fit, seir_integrate, trajectory_csv, SeirFitOptions, SeirParams, SeirRates,
    SeirState, SeirWindowFit,
};
