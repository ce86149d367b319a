//! Maximum-likelihood and MAP estimation for the softmax model, with
//! identification checks and asymptotic inference.
//!
//! `fit_ml` maximizes `ℓ(θ)`, `fit_map` maximizes `ℓ(θ) + log p(θ)`. The
//! reported covariance is the inverse of the negative Hessian at the optimum,
//! i.e. `Ĵ⁻¹/n` with `Ĵ = −H(θ̂)/n`.

mod identification;
mod inference;
pub mod solver;

use nalgebra::{DMatrix, DVector};

pub use identification::{check_identification, IdentificationReport, DEFAULT_RELATIVE_THRESHOLD};
pub use inference::{
    confidence_intervals, pool_fits, welch_t_test, ConfidenceInterval, PooledFit, SampleSummary, WelchTest,
};
pub use solver::{Method, SolverOptions, Termination};

use crate::error::{Error, Result};
use crate::model::{evaluate, ChoiceDataset, ParamVector, Prior};
use solver::Objective;

/// Outcome of an ML or MAP fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    /// `(−∇²L(θ̂))⁻¹`; `None` when the curvature at the optimum is not positive definite.
    pub covariance: Option<DMatrix<f64>>,
    /// `ℓ(θ̂)`. For MAP fits this excludes the prior term.
    pub log_likelihood: f64,
    /// Value of the maximized objective (`ℓ` for ML, `ℓ + log p` for MAP).
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the objective gradient at `θ̂`.
    pub gradient_norm: f64,
    pub termination: Termination,
    pub observations: usize,
    /// Objective value after every accepted step.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn standard_errors(&self) -> Option<DVector<f64>> {
        self.covariance
            .as_ref()
            .map(|c| c.diagonal().map(|v| v.max(0.0).sqrt()))
    }
}

struct Likelihood<'a> {
    data: &'a ChoiceDataset,
}

impl Objective for Likelihood<'_> {
    fn dim(&self) -> usize {
        self.data.features()
    }

    fn value_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let e = evaluate(self.data, x, true, false)?;
        Ok((e.value, e.gradient.expect("requested")))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(evaluate(self.data, x, false, true)?.hessian.expect("requested"))
    }
}

struct Posterior<'a, P: ?Sized> {
    data: &'a ChoiceDataset,
    prior: &'a P,
}

impl<P: Prior + ?Sized> Objective for Posterior<'_, P> {
    fn dim(&self) -> usize {
        self.data.features()
    }

    fn value_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let e = evaluate(self.data, x, true, false)?;
        let lp = self.prior.log_density(x);
        if !lp.is_finite() {
            return Err(Error::non_finite("log prior density"));
        }
        Ok((e.value + lp, e.gradient.expect("requested") + self.prior.log_density_gradient(x)))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = evaluate(self.data, x, false, true)?.hessian.expect("requested");
        Ok(h + self.prior.log_density_hessian(x))
    }
}

/// Maximum-likelihood estimate of `θ`.
pub fn fit_ml(data: &ChoiceDataset, init: &ParamVector, options: &SolverOptions) -> Result<FitResult> {
    fit(&Likelihood { data }, data, init, options)
}

/// MAP estimate of `θ` under `prior`.
pub fn fit_map<P: Prior + ?Sized>(
    data: &ChoiceDataset,
    prior: &P,
    init: &ParamVector,
    options: &SolverOptions,
) -> Result<FitResult> {
    if !prior.log_density(init.as_vector()).is_finite() {
        return Err(Error::invalid("prior density is not finite at the initial point"));
    }
    fit(&Posterior { data, prior }, data, init, options)
}

fn fit<O: Objective>(
    objective: &O,
    data: &ChoiceDataset,
    init: &ParamVector,
    options: &SolverOptions,
) -> Result<FitResult> {
    if init.len() != data.features() {
        return Err(Error::shape(format!(
            "initial θ has length {}, data has {} features",
            init.len(),
            data.features()
        )));
    }
    let solution = solver::maximize(objective, init.as_vector(), options)?;
    let covariance = spd_inverse(-objective.hessian(&solution.x)?);
    let log_likelihood = evaluate(data, &solution.x, false, false)?.value;
    Ok(FitResult {
        converged: solution.converged(),
        gradient_norm: solution.gradient.amax(),
        theta_hat: ParamVector::new(solution.x)?,
        covariance,
        log_likelihood,
        objective: solution.value,
        iterations: solution.iterations,
        termination: solution.termination,
        observations: data.len(),
        trace: solution.trace,
    })
}

/// [`fit_ml`] on within-observation centered, unit-RMS features, mapped back to the
/// original scale. Useful when feature columns differ by many orders of magnitude.
pub fn fit_ml_conditioned(data: &ChoiceDataset, init: &ParamVector, options: &SolverOptions) -> Result<FitResult> {
    if init.len() != data.features() {
        return Err(Error::shape(format!(
            "initial θ has length {}, data has {} features",
            init.len(),
            data.features()
        )));
    }
    let (scaled, scales) = data.conditioned();
    let scaled_init = ParamVector::new(init.as_vector().component_mul(&scales))?;
    let fit = fit_ml(&scaled, &scaled_init, options)?;
    let theta = fit.theta_hat.as_vector().component_div(&scales);
    let covariance = fit.covariance.map(|c| {
        let inv = scales.map(|s| 1.0 / s);
        DMatrix::from_diagonal(&inv) * c * DMatrix::from_diagonal(&inv)
    });
    let gradient = evaluate(data, &theta, true, false)?.gradient.expect("requested");
    Ok(FitResult {
        theta_hat: ParamVector::new(theta)?,
        covariance,
        gradient_norm: gradient.amax(),
        ..fit
    })
}

/// Inverse of a symmetric positive-definite matrix via Cholesky; `None` when it is not SPD.
pub(crate) fn spd_inverse(matrix: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = matrix.nrows();
    let chol = matrix.cholesky()?;
    let cov = chol.solve(&DMatrix::identity(n, n));
    let cov = (&cov + cov.transpose()) * 0.5;
    cov.diagonal().iter().all(|v| *v > 0.0 && v.is_finite()).then_some(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlatPrior, GaussianPrior, Observation};

    fn tiny_dataset() -> ChoiceDataset {
        let rows = [
            ([0.5, -1.0, 2.0], 2),
            ([1.0, 0.0, -1.0], 0),
            ([-0.3, 0.8, 0.1], 1),
            ([2.0, 1.0, 0.0], 0),
            ([0.0, -0.5, 0.7], 1),
        ];
        let obs = rows
            .iter()
            .map(|(x, c)| Observation::new(DMatrix::from_column_slice(3, 1, x), *c).unwrap())
            .collect();
        ChoiceDataset::new(obs).unwrap()
    }

    #[test]
    fn ml_reaches_first_order_optimality() {
        let fit = fit_ml(&tiny_dataset(), &ParamVector::zeros(1), &Default::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.gradient_norm <= 1e-8);
        assert!(fit.covariance.unwrap()[(0, 0)] > 0.0);
    }

    #[test]
    fn newton_agrees_with_quasi_newton() {
        let data = tiny_dataset();
        let a = fit_ml(&data, &ParamVector::zeros(1), &Default::default()).unwrap();
        let opts = SolverOptions {
            method: Method::Newton,
            ..Default::default()
        };
        let b = fit_ml(&data, &ParamVector::zeros(1), &opts).unwrap();
        assert!((a.theta_hat.as_slice()[0] - b.theta_hat.as_slice()[0]).abs() < 1e-8);
    }

    #[test]
    fn flat_prior_map_equals_ml() {
        let data = tiny_dataset();
        let ml = fit_ml(&data, &ParamVector::zeros(1), &Default::default()).unwrap();
        let map = fit_map(&data, &FlatPrior, &ParamVector::zeros(1), &Default::default()).unwrap();
        assert!((ml.theta_hat.as_slice()[0] - map.theta_hat.as_slice()[0]).abs() < 1e-6);
    }

    #[test]
    fn tight_gaussian_prior_dominates() {
        let prior = GaussianPrior::diagonal(DVector::from_vec(vec![3.0]), &[1e-8]).unwrap();
        let map = fit_map(&tiny_dataset(), &prior, &ParamVector::zeros(1), &Default::default()).unwrap();
        assert!((map.theta_hat.as_slice()[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn all_zero_features_converge_at_init_without_covariance() {
        let obs = (0..4)
            .map(|k| Observation::new(DMatrix::zeros(3, 2), k % 3).unwrap())
            .collect();
        let data = ChoiceDataset::new(obs).unwrap();
        let fit = fit_ml(&data, &ParamVector::zeros(2), &Default::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.iterations, 0);
        assert!(fit.covariance.is_none());
        assert!(!check_identification(&data, DEFAULT_RELATIVE_THRESHOLD).identified);
    }

    #[test]
    fn separable_data_terminates() {
        // Always picking the option with the larger feature: ℓ increases without bound.
        let obs = (0..5)
            .map(|k| {
                let x = DMatrix::from_column_slice(2, 1, &[1.0 + k as f64, 0.0]);
                Observation::new(x, 0).unwrap()
            })
            .collect();
        let data = ChoiceDataset::new(obs).unwrap();
        let opts = SolverOptions {
            max_iterations: 200,
            ..Default::default()
        };
        let fit = fit_ml(&data, &ParamVector::zeros(1), &opts).unwrap();
        assert!(fit.iterations <= 200);
        assert!(fit.theta_hat.as_slice()[0] > 5.0);
    }

    #[test]
    fn conditioned_fit_matches_plain_fit() {
        let base = tiny_dataset();
        let obs = base
            .observations()
            .iter()
            .map(|o| {
                let x = o.features();
                let wide = DMatrix::from_fn(3, 2, |i, j| if j == 0 { x[(i, 0)] * 1e4 } else { x[(i, 0)] * x[(i, 0)] });
                Observation::new(wide, o.chosen()).unwrap()
            })
            .collect();
        let data = ChoiceDataset::new(obs).unwrap();
        let plain = fit_ml(&data, &ParamVector::zeros(2), &Default::default()).unwrap();
        let cond = fit_ml_conditioned(&data, &ParamVector::zeros(2), &Default::default()).unwrap();
        assert!(cond.converged);
        assert!((plain.log_likelihood - cond.log_likelihood).abs() < 1e-9);
        let (a, b) = (plain.theta_hat.as_slice(), cond.theta_hat.as_slice());
        assert!(((a[0] - b[0]) / b[0]).abs() < 1e-5, "{a:?} vs {b:?}");
        let (ca, cb) = (plain.covariance.unwrap(), cond.covariance.unwrap());
        assert!(((ca[(1, 1)] - cb[(1, 1)]) / cb[(1, 1)]).abs() < 1e-4);
    }

    #[test]
    fn init_shape_is_checked() {
        assert!(fit_ml(&tiny_dataset(), &ParamVector::zeros(2), &Default::default()).is_err());
    }
}
