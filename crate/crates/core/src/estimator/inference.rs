use nalgebra::{DMatrix, DVector};

use super::{spd_inverse, FitResult, Termination};
use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::stats::{student_t_two_sided_p, two_sided_normal_quantile};

/// Per-coordinate Wald interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, theta: &[f64]) -> Vec<bool> {
        theta
            .iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] <= *v && *v <= self.upper[i])
            .collect()
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }
}

/// `θ̂_i ± z_{(1+level)/2} · sqrt(cov_ii)` from the asymptotic normal law.
pub fn confidence_intervals(fit: &FitResult, level: f64) -> Result<ConfidenceInterval> {
    let z = two_sided_normal_quantile(level)?;
    let se = fit
        .standard_errors()
        .ok_or_else(|| Error::invalid("fit has no covariance; intervals unavailable"))?;
    let theta = fit.theta_hat.as_vector();
    Ok(ConfidenceInterval {
        lower: theta - &se * z,
        upper: theta + &se * z,
        level,
    })
}

/// Precision-weighted combination of independent fits.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFit {
    pub fit: FitResult,
    /// Indices of the fits that entered the pool.
    pub used: Vec<usize>,
    /// Indices dropped because their covariance was missing or singular.
    pub excluded: Vec<usize>,
}

/// Fixed-effects pooling: `Σ = (Σ_s Σ_s⁻¹)⁻¹`, `θ = Σ · Σ_s Σ_s⁻¹ θ̂_s`.
pub fn pool_fits(fits: &[FitResult]) -> Result<PooledFit> {
    let first = fits.first().ok_or_else(|| Error::invalid("no fits to pool"))?;
    let dim = first.theta_hat.len();
    if fits.iter().any(|f| f.theta_hat.len() != dim) {
        return Err(Error::shape("pooled fits must share the parameter dimension"));
    }

    let mut precision = DMatrix::zeros(dim, dim);
    let mut weighted = DVector::zeros(dim);
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for (s, fit) in fits.iter().enumerate() {
        let Some(p) = fit.covariance.clone().and_then(spd_inverse) else {
            excluded.push(s);
            continue;
        };
        weighted += &p * fit.theta_hat.as_vector();
        precision += p;
        used.push(s);
    }
    if used.is_empty() {
        return Err(Error::invalid("every fit lacks a usable covariance"));
    }
    let covariance = spd_inverse(precision)
        .ok_or_else(|| Error::NotPositiveDefinite("pooled precision".into()))?;
    let theta = &covariance * weighted;

    let members = used.iter().map(|&s| &fits[s]);
    let fit = FitResult {
        theta_hat: ParamVector::new(theta)?,
        covariance: Some(covariance),
        log_likelihood: members.clone().map(|f| f.log_likelihood).sum(),
        objective: members.clone().map(|f| f.objective).sum(),
        converged: members.clone().all(|f| f.converged),
        iterations: members.clone().map(|f| f.iterations).max().unwrap_or(0),
        gradient_norm: members.clone().map(|f| f.gradient_norm).fold(0.0, f64::max),
        termination: if members.clone().all(|f| f.converged) {
            Termination::GradientTolerance
        } else {
            members
                .clone()
                .map(|f| f.termination)
                .find(|t| *t != Termination::GradientTolerance)
                .unwrap_or(Termination::GradientTolerance)
        },
        observations: members.map(|f| f.observations).sum(),
        trace: Vec::new(),
    };
    Ok(PooledFit { fit, used, excluded })
}

/// Sample mean, unbiased variance and size of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

impl SampleSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("a sample summary needs at least two values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            variance,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

/// Two-sided Welch t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: SampleSummary, b: SampleSummary) -> Result<WelchTest> {
    for s in [&a, &b] {
        if s.count < 2 {
            return Err(Error::invalid("Welch test needs at least two samples per group"));
        }
        if !(s.variance > 0.0) || !s.variance.is_finite() || !s.mean.is_finite() {
            return Err(Error::invalid("Welch test needs finite means and positive variances"));
        }
    }
    let va = a.variance / a.count as f64;
    let vb = b.variance / b.count as f64;
    let t = (a.mean - b.mean) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.count - 1) as f64 + vb * vb / (b.count - 1) as f64);
    Ok(WelchTest {
        t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided_p(t, df)?,
    })
}
