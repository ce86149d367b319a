//! Feature blocks for common softmax decision models that are linear in their
//! unknown parameters.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A known-value softmax model, written so its unknowns form `θ`.
#[derive(Debug, Clone, Copy)]
pub enum ExampleModel<'a> {
    /// `P(i) ∝ exp(V_i / τ)`; `θ = 1/τ`, `x_i = V_i`.
    UnknownTemperature { values: &'a [f64] },
    /// Temperature `ν / log t`; `θ = 1/ν`, `x_i = V_i log t`.
    CoolingSchedule { values: &'a [f64], t: f64 },
    /// One step of Q-learning: `θ = [1/τ; α/τ]`,
    /// `x_i = [V_i^{t-1}; δ_{t-1} 1{i = i_{t-1}}]`.
    QLearning {
        previous_values: &'a [f64],
        previous_prediction_error: f64,
        /// Zero-based index of the option chosen at `t - 1`.
        previous_choice: usize,
    },
}

impl ExampleModel<'_> {
    pub fn feature_count(&self) -> usize {
        match self {
            ExampleModel::UnknownTemperature { .. } | ExampleModel::CoolingSchedule { .. } => 1,
            ExampleModel::QLearning { .. } => 2,
        }
    }
}

/// Builds the `m × n_obj` feature block of one decision.
pub fn build_softmax_features(model: ExampleModel<'_>) -> Result<DMatrix<f64>> {
    let check = |values: &[f64]| -> Result<()> {
        if values.len() < 2 {
            return Err(Error::shape("need values for at least 2 options"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("option values"));
        }
        Ok(())
    };
    match model {
        ExampleModel::UnknownTemperature { values } => {
            check(values)?;
            Ok(DMatrix::from_column_slice(values.len(), 1, values))
        }
        ExampleModel::CoolingSchedule { values, t } => {
            check(values)?;
            if !(t >= 1.0) || !t.is_finite() {
                return Err(Error::invalid(format!("decision time must be finite and >= 1, got {t}")));
            }
            if t == 1.0 {
                return Err(Error::invalid(
                    "t = 1 gives log t = 0, so every feature is zero and the decision carries no information about θ",
                ));
            }
            let log_t = t.ln();
            Ok(DMatrix::from_iterator(
                values.len(),
                1,
                values.iter().map(|v| v * log_t),
            ))
        }
        ExampleModel::QLearning {
            previous_values,
            previous_prediction_error,
            previous_choice,
        } => {
            check(previous_values)?;
            if !previous_prediction_error.is_finite() {
                return Err(Error::non_finite("prediction error"));
            }
            if previous_choice >= previous_values.len() {
                return Err(Error::invalid(format!(
                    "previous choice {previous_choice} out of range for {} options",
                    previous_values.len()
                )));
            }
            let m = previous_values.len();
            Ok(DMatrix::from_fn(m, 2, |i, j| match j {
                0 => previous_values[i],
                _ if i == previous_choice => previous_prediction_error,
                _ => 0.0,
            }))
        }
    }
}
