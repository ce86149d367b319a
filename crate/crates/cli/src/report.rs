//! JSON shapes shared by the result files. Matrices are stored row-major.

use choicefit::estimator::{confidence_intervals, IdentificationReport, Termination};
use choicefit::FitResult;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub theta_hat: Vec<f64>,
    pub covariance: Option<Vec<f64>>,
    pub standard_errors: Option<Vec<f64>>,
    /// Wald interval from the asymptotic covariance; absent when the covariance is.
    pub confidence_interval: Option<Interval>,
    pub log_likelihood: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub termination: Termination,
    pub observations: usize,
}

impl FitSummary {
    pub fn new(fit: &FitResult, level: f64) -> Result<Self, choicefit::Error> {
        let confidence_interval = match fit.covariance {
            Some(_) => {
                let ci = confidence_intervals(fit, level)?;
                Some(Interval {
                    level,
                    lower: ci.lower.as_slice().to_vec(),
                    upper: ci.upper.as_slice().to_vec(),
                })
            }
            None => None,
        };
        Ok(Self {
            theta_hat: fit.theta_hat.as_slice().to_vec(),
            covariance: fit.covariance.as_ref().map(row_major),
            standard_errors: fit.standard_errors().map(|s| s.as_slice().to_vec()),
            confidence_interval,
            log_likelihood: fit.log_likelihood,
            objective: fit.objective,
            converged: fit.converged,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            termination: fit.termination,
            observations: fit.observations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSummary {
    pub identified: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub n_lower_bound: usize,
    pub meets_lower_bound: bool,
    pub second_moment: Vec<f64>,
}

impl From<&IdentificationReport> for IdentificationSummary {
    fn from(r: &IdentificationReport) -> Self {
        Self {
            identified: r.identified,
            min_eigenvalue: r.min_eigenvalue,
            threshold: r.threshold,
            n_lower_bound: r.n_lower_bound,
            meets_lower_bound: r.meets_lower_bound,
            second_moment: row_major(&r.second_moment),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_order() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(row_major(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
