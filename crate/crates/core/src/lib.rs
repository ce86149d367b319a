//! Maximum-likelihood and MAP estimation for softmax decision models whose
//! objective is linear in the unknown parameters, together with a simulator
//! for the stochastic UCL bandit agent and the linearization that turns its
//! nonlinear objective into an estimable softmax model.

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod error;
pub mod estimator;
pub mod features;
pub mod io;
pub mod linearize;
pub mod model;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use estimator::{fit_map, fit_ml, fit_ml_conditioned, FitResult, SolverOptions};
pub use model::{ChoiceDataset, Observation, ParamVector};
