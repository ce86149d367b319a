//! First-order expansion of the stochastic UCL objective about a nominal prior.
//!
//! With `δ0² = σ_s²/σ0²` and deviations `μ0 = μ̄0 + Δμ`, `δ0² = δ̄0² + Δδ`, the
//! scaled heuristic `Q̃_i^t log t / ν` is approximated by `θᵀx_i^t` where
//! `θ = (1/ν, Δμ/ν, Δδ/ν)`. The features come from
//!
//! * `A_t = δ̄0² Λ + diag(n^t)`, `Λ = Σ⁻¹`
//! * `c = σ_s² diag(A_t⁻¹)`, `d = σ_s² diag(A_t⁻¹ Λ A_t⁻¹)`
//! * `E = μ̄0 1 + A_t⁻¹ (s^t − n^t μ̄0)`, `F = 1 − A_t⁻¹ n^t`, `G = −A_t⁻¹ Λ A_t⁻¹ (s^t − n^t μ̄0)`
//!
//! where `s^t` holds per-arm reward sums. `A_t⁻¹` and `A_t⁻¹ Λ A_t⁻¹` are carried
//! forward with rank-one updates, so `Λ` itself is never formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bandit::{build_spatial_prior, ucl_quantile, EpisodeLog, UclParams};
use crate::error::{Error, Result};
use crate::estimator::{
    check_identification, fit_ml_conditioned, pool_fits, welch_t_test, FitResult, IdentificationReport, PooledFit,
    SampleSummary, SolverOptions, WelchTest, DEFAULT_RELATIVE_THRESHOLD,
};
use crate::model::{ChoiceDataset, Observation, ParamVector};

/// Nominal prior `(μ̄0, δ̄0²)` with the fixed length scale and reward variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizationPoint {
    pub mu0_bar: f64,
    pub delta0_sq_bar: f64,
    pub lambda: f64,
    pub sigma_s_sq: f64,
}

impl LinearizationPoint {
    /// Point given by a nominal prior variance `σ̄0²` instead of `δ̄0²`.
    pub fn from_prior_variance(mu0_bar: f64, sigma0_sq_bar: f64, lambda: f64, sigma_s_sq: f64) -> Result<Self> {
        if !(sigma0_sq_bar > 0.0) || !sigma0_sq_bar.is_finite() {
            return Err(Error::invalid(format!("nominal σ0² must be positive, got {sigma0_sq_bar}")));
        }
        let point = Self {
            mu0_bar,
            delta0_sq_bar: sigma_s_sq / sigma0_sq_bar,
            lambda,
            sigma_s_sq,
        };
        point.validate()?;
        Ok(point)
    }

    pub fn sigma0_sq_bar(&self) -> f64 {
        self.sigma_s_sq / self.delta0_sq_bar
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.mu0_bar, self.delta0_sq_bar, self.lambda, self.sigma_s_sq]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::non_finite("linearization point"));
        }
        if self.delta0_sq_bar <= 0.0 || self.sigma_s_sq <= 0.0 {
            return Err(Error::invalid("δ̄0² and σ_s² must be positive"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("λ must be non-negative"));
        }
        Ok(())
    }

    /// `θ` implied by UCL parameters relative to this point.
    pub fn theta_for(&self, params: &UclParams) -> Result<[f64; 3]> {
        params.validate()?;
        if params.sigma0_sq <= 0.0 {
            return Err(Error::invalid("σ0² = 0 has no finite δ0²"));
        }
        let delta_mu = params.mu0 - self.mu0_bar;
        let delta_delta = self.sigma_s_sq / params.sigma0_sq - self.delta0_sq_bar;
        Ok(theta_from_deviations(params.nu, delta_mu, delta_delta))
    }
}

/// `(ν, Δμ, Δδ) ↦ (1/ν, Δμ/ν, Δδ/ν)`.
pub fn theta_from_deviations(nu: f64, delta_mu: f64, delta_delta: f64) -> [f64; 3] {
    [1.0 / nu, delta_mu / nu, delta_delta / nu]
}

/// Inverse of [`theta_from_deviations`]; requires `θ1 > 0`.
pub fn deviations_from_theta(theta: &[f64]) -> Result<(f64, f64, f64)> {
    if theta.len() != 3 {
        return Err(Error::shape(format!("θ has length {}, expected 3", theta.len())));
    }
    if !(theta[0] > 0.0) || !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!("θ1 = {} does not give a finite positive ν", theta[0])));
    }
    Ok((1.0 / theta[0], theta[1] / theta[0], theta[2] / theta[0]))
}

/// Expansion coefficients for one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    /// Decision time, starting at 1.
    pub t: usize,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
}

impl StepCoefficients {
    /// `N × 3` feature block `x_i^t`.
    pub fn features(&self) -> Result<DMatrix<f64>> {
        let z = ucl_quantile(self.t)?;
        let log_t = (self.t as f64).ln();
        let n = self.c.len();
        Ok(DMatrix::from_fn(n, 3, |i, j| {
            let sqrt_c = self.c[i].sqrt();
            let v = match j {
                0 => self.e[i] + sqrt_c * z,
                1 => self.f[i],
                _ => self.g[i] - self.d[i] / (2.0 * sqrt_c) * z,
            };
            v * log_t
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedCoefficients {
    pub delta0_sq_bar: f64,
    /// One entry per decision `t = 1..=T`.
    pub steps: Vec<StepCoefficients>,
}

/// `(lower, upper)` range of `Δδ` over which every linearized standard deviation
/// stays non-negative and `δ0²` stays non-negative.
pub fn delta_bounds(coefficients: &LinearizedCoefficients) -> (f64, f64) {
    let upper = coefficients
        .steps
        .iter()
        .flat_map(|s| s.c.iter().zip(s.d.iter()))
        .map(|(&c, &d)| if d > 0.0 { 2.0 * c / d } else { f64::INFINITY })
        .fold(f64::INFINITY, f64::min);
    (-coefficients.delta0_sq_bar, upper)
}

/// Linearized choice data for one episode. Decisions at `t = 1` carry zero
/// features and are left out of `data`.
#[derive(Debug, Clone)]
pub struct UclFeatureDataset {
    pub data: ChoiceDataset,
    pub coefficients: LinearizedCoefficients,
    pub point: LinearizationPoint,
    pub episode_seed: Option<u64>,
}

impl UclFeatureDataset {
    pub fn bounds(&self) -> (f64, f64) {
        delta_bounds(&self.coefficients)
    }
}

/// Replays a recorded episode and linearizes the heuristic at every decision.
pub fn linearize_episode(
    log: &EpisodeLog,
    locations: &[[f64; 2]],
    point: &LinearizationPoint,
) -> Result<UclFeatureDataset> {
    let mut out = linearize_history(&log.choices, &log.rewards, locations, point)?;
    out.episode_seed = Some(log.seed);
    Ok(out)
}

/// [`linearize_episode`] for a bare choice/reward history.
pub fn linearize_history(
    choices: &[usize],
    rewards: &[f64],
    locations: &[[f64; 2]],
    point: &LinearizationPoint,
) -> Result<UclFeatureDataset> {
    let coefficients = linearized_coefficients(choices, rewards, locations, point)?;
    let observations = coefficients
        .steps
        .iter()
        .zip(choices)
        .filter(|(step, _)| step.t > 1)
        .map(|(step, &arm)| Observation::new(step.features()?, arm))
        .collect::<Result<Vec<_>>>()?;
    if observations.is_empty() {
        return Err(Error::invalid("episode has no decisions after t = 1"));
    }
    Ok(UclFeatureDataset {
        data: ChoiceDataset::new(observations)?,
        coefficients,
        point: *point,
        episode_seed: None,
    })
}

/// Coefficients `c, d, e, f, g` for decisions `1..=T`.
pub fn linearized_coefficients(
    choices: &[usize],
    rewards: &[f64],
    locations: &[[f64; 2]],
    point: &LinearizationPoint,
) -> Result<LinearizedCoefficients> {
    point.validate()?;
    if choices.len() != rewards.len() {
        return Err(Error::shape("choices and rewards differ in length"));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::non_finite("rewards"));
    }
    let n = locations.len();
    if let Some(&bad) = choices.iter().find(|&&a| a >= n) {
        return Err(Error::shape(format!("arm {bad} out of range for {n} arms")));
    }
    let sigma = build_spatial_prior(locations, point.lambda)?;
    let delta = point.delta0_sq_bar;
    let mut a_inv = &sigma / delta;
    let mut m = &sigma / (delta * delta);
    let mut counts = DVector::<f64>::zeros(n);
    let mut sums = DVector::<f64>::zeros(n);
    let sigma_s_sq = point.sigma_s_sq;

    let mut steps = Vec::with_capacity(choices.len());
    for (k, (&arm, &reward)) in choices.iter().zip(rewards).enumerate() {
        let residual = &sums - &counts * point.mu0_bar;
        let step = StepCoefficients {
            t: k + 1,
            c: a_inv.diagonal() * sigma_s_sq,
            d: m.diagonal() * sigma_s_sq,
            e: (&a_inv * &residual).add_scalar(point.mu0_bar),
            f: DVector::from_element(n, 1.0) - &a_inv * &counts,
            g: -(&m * &residual),
        };
        if step.c.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!("A_t at decision {}", k + 1)));
        }
        steps.push(step);

        let u = a_inv.column(arm).clone_owned();
        let m_a = m.column(arm).clone_owned();
        let kappa = 1.0 + u[arm];
        let m_aa = m_a[arm];
        a_inv.ger(-1.0 / kappa, &u, &u, 1.0);
        m.ger(-1.0 / kappa, &m_a, &u, 1.0);
        m.ger(-1.0 / kappa, &u, &m_a, 1.0);
        m.ger(m_aa / (kappa * kappa), &u, &u, 1.0);
        counts[arm] += 1.0;
        sums[arm] += reward;
    }
    Ok(LinearizedCoefficients {
        delta0_sq_bar: delta,
        steps,
    })
}

/// UCL parameters recovered from `θ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedEstimate {
    pub nu: f64,
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub delta_mu: f64,
    pub delta_delta: f64,
    /// Delta-method covariance of `(ν, μ0, σ0²)`.
    pub covariance: Option<DMatrix<f64>>,
}

/// Maps `θ` (and its covariance) to `(ν, μ0, σ0²)`. `None` when `θ1 ≤ 0` or `δ0² ≤ 0`.
pub fn transform_theta(
    theta: &[f64],
    covariance: Option<&DMatrix<f64>>,
    point: &LinearizationPoint,
) -> Option<TransformedEstimate> {
    let (nu, delta_mu, delta_delta) = deviations_from_theta(theta).ok()?;
    let delta0_sq = point.delta0_sq_bar + delta_delta;
    if !(delta0_sq > 0.0) {
        return None;
    }
    let (t1, t2, t3) = (theta[0], theta[1], theta[2]);
    let ds = -point.sigma_s_sq / (delta0_sq * delta0_sq);
    #[rustfmt::skip]
    let jacobian = DMatrix::from_row_slice(3, 3, &[
        -1.0 / (t1 * t1), 0.0, 0.0,
        -t2 / (t1 * t1), 1.0 / t1, 0.0,
        -ds * t3 / (t1 * t1), 0.0, ds / t1,
    ]);
    Some(TransformedEstimate {
        nu,
        mu0: point.mu0_bar + delta_mu,
        sigma0_sq: point.sigma_s_sq / delta0_sq,
        delta_mu,
        delta_delta,
        covariance: covariance.map(|c| &jacobian * c * jacobian.transpose()),
    })
}

/// Reasons an estimate falls outside the region where the linearization applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validity {
    Valid,
    /// `θ1 ≤ 0`: no finite positive `ν`.
    NonPositiveTheta1,
    /// `Δδ` outside [`delta_bounds`].
    DeltaOutOfBounds,
}

#[derive(Debug, Clone)]
pub struct UclEstimate {
    /// Fit of the raw `θ`.
    pub fit: FitResult,
    pub identification: IdentificationReport,
    pub point: LinearizationPoint,
    pub bounds: (f64, f64),
    pub transformed: Option<TransformedEstimate>,
    pub validity: Validity,
}

impl UclEstimate {
    pub fn theta(&self) -> &[f64] {
        self.fit.theta_hat.as_slice()
    }
}

/// Fits `θ` by maximum likelihood and maps it back to UCL parameters.
///
/// The feature columns routinely differ by ten or more orders of magnitude, so
/// identification is judged on the rescaled features; rescaling columns does
/// not change whether the model is identified.
pub fn fit_ucl(dataset: &UclFeatureDataset, options: &SolverOptions) -> Result<UclEstimate> {
    let identification = check_identification(&dataset.data.conditioned().0, DEFAULT_RELATIVE_THRESHOLD);
    if !identification.identified {
        return Err(Error::Unidentified(format!(
            "second-moment matrix has minimum eigenvalue {:.3e} (threshold {:.3e})",
            identification.min_eigenvalue, identification.threshold
        )));
    }
    let fit = fit_ml_conditioned(&dataset.data, &ParamVector::zeros(3), options)?;
    Ok(assess(fit, identification, dataset.point, dataset.bounds()))
}

fn assess(fit: FitResult, identification: IdentificationReport, point: LinearizationPoint, bounds: (f64, f64)) -> UclEstimate {
    let theta = fit.theta_hat.as_slice();
    let transformed = transform_theta(theta, fit.covariance.as_ref(), &point);
    let validity = if !(theta[0] > 0.0) {
        Validity::NonPositiveTheta1
    } else {
        let delta_delta = theta[2] / theta[0];
        if delta_delta < bounds.0 || delta_delta > bounds.1 {
            Validity::DeltaOutOfBounds
        } else {
            Validity::Valid
        }
    };
    UclEstimate {
        fit,
        identification,
        point,
        bounds,
        transformed,
        validity,
    }
}

/// Pooled estimate for one labeled group of subjects.
#[derive(Debug, Clone)]
pub struct GroupFit {
    pub label: String,
    /// Indices into the input slice.
    pub members: Vec<usize>,
    pub pooled: PooledFit,
    pub transformed: Option<TransformedEstimate>,
    pub total_log_likelihood: f64,
    pub mean_log_likelihood: f64,
}

/// Per-coordinate Welch tests between two groups' individual `θ̂`.
#[derive(Debug, Clone)]
pub struct GroupComparison {
    pub first: String,
    pub second: String,
    /// `None` when either group has fewer than two usable members.
    pub tests: Option<Vec<WelchTest>>,
    /// Bonferroni-adjusted p-value for "any coordinate differs".
    pub family_p_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PopulationFit {
    pub groups: Vec<GroupFit>,
    pub comparisons: Vec<GroupComparison>,
}

/// Pools individual fits by group label and compares every pair of groups.
///
/// Groups appear in order of first occurrence. Welch tests use the converged
/// individual fits only. Every member of a group must share its linearization point.
pub fn fit_population(estimates: &[UclEstimate], labels: &[String]) -> Result<PopulationFit> {
    if estimates.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} estimates but {} labels",
            estimates.len(),
            labels.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::invalid("no estimates to pool"));
    }
    let mut order: Vec<&String> = Vec::new();
    for label in labels {
        if !order.contains(&label) {
            order.push(label);
        }
    }

    let mut groups = Vec::with_capacity(order.len());
    let mut samples = Vec::with_capacity(order.len());
    for label in order {
        let members: Vec<usize> = (0..labels.len()).filter(|&k| &labels[k] == label).collect();
        let point = estimates[members[0]].point;
        if members.iter().any(|&k| estimates[k].point != point) {
            return Err(Error::invalid(format!(
                "group {label:?} mixes linearization points"
            )));
        }
        let fits: Vec<FitResult> = members.iter().map(|&k| estimates[k].fit.clone()).collect();
        let pooled = pool_fits(&fits)?;
        let transformed = transform_theta(pooled.fit.theta_hat.as_slice(), pooled.fit.covariance.as_ref(), &point);
        let total: f64 = fits.iter().map(|f| f.log_likelihood).sum();
        let usable: Vec<&[f64]> = fits
            .iter()
            .filter(|f| f.converged && f.theta_hat.as_slice().iter().all(|v| v.is_finite()))
            .map(|f| f.theta_hat.as_slice())
            .collect();
        let per_coordinate: Option<Vec<SampleSummary>> = (usable.len() >= 2).then(|| {
            (0..3)
                .map(|j| {
                    let values: Vec<f64> = usable.iter().map(|t| t[j]).collect();
                    SampleSummary::from_values(&values)
                })
                .collect::<Result<Vec<_>>>()
        }).transpose()?;
        samples.push(per_coordinate);
        groups.push(GroupFit {
            label: label.clone(),
            total_log_likelihood: total,
            mean_log_likelihood: total / members.len() as f64,
            members,
            pooled,
            transformed,
        });
    }

    let mut comparisons = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let tests = match (&samples[i], &samples[j]) {
                (Some(a), Some(b)) => Some(
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| welch_t_test(*x, *y))
                        .collect::<Result<Vec<_>>>()?,
                ),
                _ => None,
            };
            let family_p_value = tests.as_ref().map(|ts| {
                let min = ts.iter().map(|t| t.p_value).fold(f64::INFINITY, f64::min);
                (min * ts.len() as f64).min(1.0)
            });
            comparisons.push(GroupComparison {
                first: groups[i].label.clone(),
                second: groups[j].label.clone(),
                tests,
                family_p_value,
            });
        }
    }
    Ok(PopulationFit { groups, comparisons })
}
