//! Softmax choice model with a linear objective shared across options.
//!
//! Every option `i` of observation `k` carries a feature row `x_i^k`; the
//! probability of choosing `i` is `exp(θᵀx_i) / Σ_j exp(θᵀx_j)`. All
//! exponentials go through a max-shifted log-sum-exp so large utilities during
//! a line search never overflow.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// One observed decision: an `m × n_obj` feature block and the chosen row.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    features: DMatrix<f64>,
    chosen: usize,
}

impl Observation {
    /// `chosen` is a zero-based row index into `features`.
    pub fn new(features: DMatrix<f64>, chosen: usize) -> Result<Self> {
        if features.nrows() < 2 {
            return Err(Error::shape(format!(
                "an observation needs at least 2 options, got {}",
                features.nrows()
            )));
        }
        if features.ncols() < 1 {
            return Err(Error::shape("an observation needs at least one feature"));
        }
        if chosen >= features.nrows() {
            return Err(Error::invalid(format!(
                "chosen option {chosen} out of range for {} options",
                features.nrows()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("observation features"));
        }
        Ok(Self { features, chosen })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn chosen(&self) -> usize {
        self.chosen
    }

    pub fn options(&self) -> usize {
        self.features.nrows()
    }

    /// Stacked form `[x_1; x_2; …; x_m]` of length `m · n_obj`.
    pub fn concatenated(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.features.len(),
            self.features.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
        )
    }
}

/// A validated set of observations sharing the same `m × n_obj` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDataset {
    observations: Vec<Observation>,
    options: usize,
    features: usize,
}

impl ChoiceDataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::invalid("a dataset needs at least one observation"))?;
        let (options, features) = first.features.shape();
        for (k, obs) in observations.iter().enumerate() {
            if obs.features.shape() != (options, features) {
                return Err(Error::shape(format!(
                    "observation {k} has shape {:?}, expected {:?}",
                    obs.features.shape(),
                    (options, features)
                )));
            }
        }
        Ok(Self {
            observations,
            options,
            features,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Number of options `m`.
    pub fn options(&self) -> usize {
        self.options
    }

    /// Feature count `n_obj`.
    pub fn features(&self) -> usize {
        self.features
    }

    /// Observation count `n`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// First `n` observations.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "cannot truncate a dataset of {} observations to {n}",
                self.len()
            )));
        }
        Ok(Self {
            observations: self.observations[..n].to_vec(),
            options: self.options,
            features: self.features,
        })
    }

    /// Centers each observation's rows and divides every feature column by its
    /// within-observation RMS spread. Softmax probabilities are unchanged by the
    /// centering, and `θ_original[j] = θ_scaled[j] / scales[j]`.
    pub fn conditioned(&self) -> (Self, DVector<f64>) {
        let mut sum_sq = DVector::<f64>::zeros(self.features);
        let centered: Vec<DMatrix<f64>> = self
            .observations
            .iter()
            .map(|obs| {
                let mean = obs.features.row_mean();
                let mut x = obs.features.clone();
                for mut row in x.row_iter_mut() {
                    row -= &mean;
                }
                for row in x.row_iter() {
                    for (j, v) in row.iter().enumerate() {
                        sum_sq[j] += v * v;
                    }
                }
                x
            })
            .collect();
        let count = (self.len() * self.options) as f64;
        let scales = sum_sq.map(|s| {
            let rms = (s / count).sqrt();
            if rms > 0.0 && rms.is_finite() {
                rms
            } else {
                1.0
            }
        });
        let observations = centered
            .into_iter()
            .zip(&self.observations)
            .map(|(mut x, obs)| {
                for j in 0..self.features {
                    x.column_mut(j).unscale_mut(scales[j]);
                }
                Observation {
                    features: x,
                    chosen: obs.chosen,
                }
            })
            .collect();
        (
            Self {
                observations,
                options: self.options,
                features: self.features,
            },
            scales,
        )
    }
}

/// The estimand `θ`, one weight per feature, shared by all options.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("parameter vector must be non-empty"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("parameter vector"));
        }
        Ok(Self(theta))
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(theta))
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len.max(1)))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// A log-prior over `θ` for MAP estimation.
pub trait Prior: Sync {
    fn log_density(&self, theta: &DVector<f64>) -> f64;

    fn log_density_gradient(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Hessian of the log-density. The default differentiates the gradient
    /// with central differences.
    fn log_density_hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = theta.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let step = 1e-5 * theta[j].abs().max(1.0);
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += step;
            minus[j] -= step;
            let column =
                (self.log_density_gradient(&plus) - self.log_density_gradient(&minus)) / (2.0 * step);
            h.set_column(j, &column);
        }
        (&h + h.transpose()) * 0.5
    }
}

/// Improper constant prior; MAP coincides with ML.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatPrior;

impl Prior for FlatPrior {
    fn log_density(&self, _theta: &DVector<f64>) -> f64 {
        0.0
    }

    fn log_density_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(theta.len())
    }

    fn log_density_hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(theta.len(), theta.len())
    }
}

/// Multivariate normal prior `N(mean, covariance)`.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_normalizer: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != (n, n) {
            return Err(Error::shape(format!(
                "prior covariance is {:?}, expected {n}x{n}",
                covariance.shape()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("prior"));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("prior covariance".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_normalizer =
            -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            precision: chol.inverse(),
            log_normalizer,
        })
    }

    /// Independent coordinates with the given variances.
    pub fn diagonal(mean: DVector<f64>, variances: &[f64]) -> Result<Self> {
        if variances.len() != mean.len() {
            return Err(Error::shape("prior variances and mean differ in length"));
        }
        Self::new(mean, DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

impl Prior for GaussianPrior {
    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mean;
        self.log_normalizer - 0.5 * d.dot(&(&self.precision * &d))
    }

    fn log_density_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.precision * (theta - &self.mean))
    }

    fn log_density_hessian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        -self.precision.clone()
    }
}

fn check_theta(features: usize, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != features {
        return Err(Error::shape(format!(
            "theta has length {}, features have {features} columns",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("theta"));
    }
    Ok(())
}

/// Max-shifted softmax of `features · θ`; returns `(probabilities, log-sum-exp, utilities)`.
fn softmax_parts(features: &DMatrix<f64>, theta: &DVector<f64>) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    let utilities = features * theta;
    let max = utilities.max();
    if !max.is_finite() {
        return Err(Error::non_finite("option utilities"));
    }
    let weights = utilities.map(|u| (u - max).exp());
    let total = weights.sum();
    let lse = max + total.ln();
    if !lse.is_finite() {
        return Err(Error::non_finite("log-sum-exp"));
    }
    Ok((weights / total, lse, utilities))
}

/// Choice probabilities for one feature block.
pub fn choice_probabilities(features: &DMatrix<f64>, theta: &ParamVector) -> Result<DVector<f64>> {
    if features.nrows() == 0 {
        return Err(Error::shape("feature block has no options"));
    }
    check_theta(features.ncols(), theta.as_vector())?;
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("features"));
    }
    softmax_parts(features, theta.as_vector()).map(|(p, _, _)| p)
}

/// Draws an option index from the model's choice distribution.
pub fn sample_choice<R: Rng + ?Sized>(
    features: &DMatrix<f64>,
    theta: &ParamVector,
    rng: &mut R,
) -> Result<usize> {
    let p = choice_probabilities(features, theta)?;
    Ok(sample_index(p.as_slice(), rng))
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave acc slightly below 1; fall back to the last positive entry.
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

/// Log-likelihood with optional first and second derivatives.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Evaluates `ℓ(θ)` and, on request, its gradient and Hessian in one pass.
pub fn evaluate(
    data: &ChoiceDataset,
    theta: &DVector<f64>,
    with_gradient: bool,
    with_hessian: bool,
) -> Result<LikelihoodEval> {
    check_theta(data.features(), theta)?;
    let n_obj = data.features();
    let mut value = 0.0;
    let mut gradient = with_gradient.then(|| DVector::zeros(n_obj));
    let mut hessian = with_hessian.then(|| DMatrix::zeros(n_obj, n_obj));

    for obs in data.observations() {
        let x = &obs.features;
        let (p, lse, utilities) = softmax_parts(x, theta)?;
        value += utilities[obs.chosen] - lse;
        if gradient.is_none() && hessian.is_none() {
            continue;
        }
        let mean = x.tr_mul(&p);
        if let Some(g) = gradient.as_mut() {
            *g += x.row(obs.chosen).transpose() - &mean;
        }
        if let Some(h) = hessian.as_mut() {
            // Centered form -Σ p_i (x_i - x̄)(x_i - x̄)ᵀ stays negative semidefinite under rounding.
            for (i, row) in x.row_iter().enumerate() {
                let d = row.transpose() - &mean;
                h.ger(-p[i], &d, &d, 1.0);
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::non_finite("log-likelihood"));
    }
    if let Some(h) = hessian.as_mut() {
        let sym = (&*h + h.transpose()) * 0.5;
        *h = sym;
    }
    Ok(LikelihoodEval {
        value,
        gradient,
        hessian,
    })
}

/// `ℓ(θ) = Σ_k [θᵀx_{chosen}^k − log Σ_i exp(θᵀx_i^k)]`.
pub fn log_likelihood(data: &ChoiceDataset, theta: &ParamVector) -> Result<f64> {
    evaluate(data, theta.as_vector(), false, false).map(|e| e.value)
}

/// `∇ℓ = Σ_k [x_{chosen}^k − Σ_i p_i^k x_i^k]`.
pub fn log_likelihood_gradient(data: &ChoiceDataset, theta: &ParamVector) -> Result<DVector<f64>> {
    evaluate(data, theta.as_vector(), true, false).map(|e| e.gradient.expect("requested"))
}

/// Hessian of `ℓ`: minus the sum over observations of the feature covariance
/// under the choice probabilities. Symmetric and negative semidefinite.
pub fn log_likelihood_hessian(data: &ChoiceDataset, theta: &ParamVector) -> Result<DMatrix<f64>> {
    evaluate(data, theta.as_vector(), false, true).map(|e| e.hessian.expect("requested"))
}
