//! Gaussian multi-armed bandits on spatial grids and the stochastic UCL agent.
//!
//! The agent keeps a multivariate Gaussian belief over the arm means, scores
//! arms with the upper-credible-limit heuristic `μ_i + σ_i Φ⁻¹(1 − α_t)` and
//! samples from a softmax whose temperature cools as `ν / log t`.
//!
//! Time convention: a [`BeliefState`] that has absorbed `t` rewards serves the
//! decision at time `t + 1`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sample_index;
use crate::stats::normal_quantile;

/// A Gaussian bandit with arms placed in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnv {
    mean_rewards: Vec<f64>,
    reward_sd: f64,
    locations: Vec<[f64; 2]>,
    horizon: usize,
}

impl BanditEnv {
    pub fn new(mean_rewards: Vec<f64>, reward_sd: f64, locations: Vec<[f64; 2]>, horizon: usize) -> Result<Self> {
        if mean_rewards.is_empty() {
            return Err(Error::invalid("a bandit needs at least one arm"));
        }
        if mean_rewards.len() != locations.len() {
            return Err(Error::shape(format!(
                "{} mean rewards but {} arm locations",
                mean_rewards.len(),
                locations.len()
            )));
        }
        if mean_rewards.iter().any(|m| !m.is_finite()) {
            return Err(Error::non_finite("mean rewards"));
        }
        if locations.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("arm locations"));
        }
        if !(reward_sd >= 0.0) || !reward_sd.is_finite() {
            return Err(Error::invalid(format!("reward sd must be finite and >= 0, got {reward_sd}")));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(Self {
            mean_rewards,
            reward_sd,
            locations,
            horizon,
        })
    }

    /// Arms on a `rows × cols` unit grid, arm `r * cols + c` at `(c + 1, r + 1)`.
    pub fn on_grid(rows: usize, cols: usize, mean_rewards: Vec<f64>, reward_sd: f64, horizon: usize) -> Result<Self> {
        Self::new(mean_rewards, reward_sd, grid_locations(rows, cols), horizon)
    }

    pub fn arms(&self) -> usize {
        self.mean_rewards.len()
    }

    pub fn mean_rewards(&self) -> &[f64] {
        &self.mean_rewards
    }

    pub fn reward_sd(&self) -> f64 {
        self.reward_sd
    }

    pub fn locations(&self) -> &[[f64; 2]] {
        &self.locations
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn best_mean(&self) -> f64 {
        self.mean_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Row-major unit-spaced grid coordinates starting at `(1, 1)`.
pub fn grid_locations(rows: usize, cols: usize) -> Vec<[f64; 2]> {
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| [(c + 1) as f64, (r + 1) as f64]))
        .collect()
}

/// Mean-reward surfaces that vary along the column axis and are flat along rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Landscape {
    /// Concave profile with a single maximum at `peak_column` (1-based).
    Unimodal {
        rows: usize,
        cols: usize,
        peak_column: usize,
        low: f64,
        high: f64,
    },
    /// Local maximum at column 1, global maximum at the last column, minimum at `trough_column`.
    Bimodal {
        rows: usize,
        cols: usize,
        trough_column: usize,
        trough: f64,
        local_peak: f64,
        global_peak: f64,
    },
    /// Explicit row-major means.
    Custom { rows: usize, cols: usize, means: Vec<f64> },
}

impl Landscape {
    /// 10 × 10 concave profile peaking at column 6, heights 10 to 60.
    pub fn standard_unimodal() -> Self {
        Landscape::Unimodal {
            rows: 10,
            cols: 10,
            peak_column: 6,
            low: 10.0,
            high: 60.0,
        }
    }

    /// 10 × 10 profile with a local peak of 40 at column 1, the global peak of 60
    /// at column 10 and a trough of 10 at column 4.
    pub fn standard_bimodal() -> Self {
        Landscape::Bimodal {
            rows: 10,
            cols: 10,
            trough_column: 4,
            trough: 10.0,
            local_peak: 40.0,
            global_peak: 60.0,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Landscape::Unimodal { rows, .. } | Landscape::Bimodal { rows, .. } | Landscape::Custom { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Landscape::Unimodal { cols, .. } | Landscape::Bimodal { cols, .. } | Landscape::Custom { cols, .. } => *cols,
        }
    }

    /// Row-major mean rewards.
    pub fn means(&self) -> Result<Vec<f64>> {
        let (rows, cols) = (self.rows(), self.cols());
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("landscape needs at least one row and column"));
        }
        let profile: Vec<f64> = match *self {
            Landscape::Unimodal {
                peak_column, low, high, ..
            } => {
                if peak_column == 0 || peak_column > cols {
                    return Err(Error::invalid(format!("peak column {peak_column} outside 1..={cols}")));
                }
                let span = (peak_column - 1).max(cols - peak_column).max(1) as f64;
                (1..=cols)
                    .map(|c| {
                        let d = (c as f64 - peak_column as f64) / span;
                        high - (high - low) * d * d
                    })
                    .collect()
            }
            Landscape::Bimodal {
                trough_column,
                trough,
                local_peak,
                global_peak,
                ..
            } => {
                if trough_column <= 1 || trough_column >= cols {
                    return Err(Error::invalid(format!(
                        "trough column {trough_column} must lie strictly inside 1..={cols}"
                    )));
                }
                let tc = trough_column as f64;
                (1..=cols)
                    .map(|c| {
                        let c = c as f64;
                        if c <= tc {
                            let d = (tc - c) / (tc - 1.0);
                            trough + (local_peak - trough) * d * d
                        } else {
                            let d = (c - tc) / (cols as f64 - tc);
                            trough + (global_peak - trough) * d * d
                        }
                    })
                    .collect()
            }
            Landscape::Custom { ref means, .. } => {
                if means.len() != rows * cols {
                    return Err(Error::shape(format!(
                        "custom landscape has {} means for a {rows}x{cols} grid",
                        means.len()
                    )));
                }
                return Ok(means.clone());
            }
        };
        Ok((0..rows).flat_map(|_| profile.iter().copied()).collect())
    }

    pub fn env(&self, reward_sd: f64, horizon: usize) -> Result<BanditEnv> {
        BanditEnv::on_grid(self.rows(), self.cols(), self.means()?, reward_sd, horizon)
    }
}

/// Stochastic UCL parameters `(μ0, σ0², λ, ν)` and the known reward variance `σ_s²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UclParams {
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub lambda: f64,
    pub nu: f64,
    pub sigma_s_sq: f64,
}

impl UclParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu0, self.sigma0_sq, self.lambda, self.nu, self.sigma_s_sq];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("UCL parameters"));
        }
        if self.sigma0_sq < 0.0 || self.lambda < 0.0 {
            return Err(Error::invalid("σ0² and λ must be non-negative"));
        }
        if self.nu <= 0.0 || self.sigma_s_sq <= 0.0 {
            return Err(Error::invalid("ν and σ_s² must be positive"));
        }
        Ok(())
    }
}

/// Correlation matrix `Σ_ij = exp(−‖z_i − z_j‖ / λ)`; `λ = 0` gives the identity.
pub fn build_spatial_prior(locations: &[[f64; 2]], lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("λ must be finite and >= 0, got {lambda}")));
    }
    let n = locations.len();
    if lambda == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let mut sigma = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let d = ((locations[i][0] - locations[j][0]).powi(2) + (locations[i][1] - locations[j][1]).powi(2)).sqrt();
            if d == 0.0 {
                return Err(Error::invalid(format!(
                    "arms {j} and {i} share a location, which makes the spatial prior singular"
                )));
            }
            let v = (-d / lambda).exp();
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok(sigma)
}

/// Gaussian posterior over the arm means.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    mu: DVector<f64>,
    /// `None` when the prior has zero variance: beliefs are then fixed forever.
    precision: Option<DMatrix<f64>>,
    covariance: DMatrix<f64>,
    counts: Vec<usize>,
    sums: Vec<f64>,
    sigma_s_sq: f64,
}

impl BeliefState {
    /// Prior `N(prior_mean, prior_covariance)` with reward noise variance `sigma_s_sq`.
    /// A zero covariance is allowed and freezes the belief.
    pub fn new(prior_mean: DVector<f64>, prior_covariance: DMatrix<f64>, sigma_s_sq: f64) -> Result<Self> {
        let n = prior_mean.len();
        if prior_covariance.shape() != (n, n) {
            return Err(Error::shape("prior covariance does not match the prior mean"));
        }
        if !(sigma_s_sq > 0.0) || !sigma_s_sq.is_finite() {
            return Err(Error::invalid("σ_s² must be positive"));
        }
        if prior_mean.iter().chain(prior_covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("prior"));
        }
        let precision = if prior_covariance.iter().all(|v| *v == 0.0) {
            None
        } else {
            let chol = prior_covariance
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("prior covariance".into()))?;
            Some(chol.inverse())
        };
        Ok(Self {
            mu: prior_mean,
            precision,
            covariance: prior_covariance,
            counts: vec![0; n],
            sums: vec![0.0; n],
            sigma_s_sq,
        })
    }

    /// The UCL prior `N(μ0 1, σ0² Σ)` for arms at `locations`.
    pub fn from_params(params: &UclParams, locations: &[[f64; 2]]) -> Result<Self> {
        params.validate()?;
        let sigma = build_spatial_prior(locations, params.lambda)?;
        let n = locations.len();
        Self::new(DVector::from_element(n, params.mu0), sigma * params.sigma0_sq, params.sigma_s_sq)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> Option<&DMatrix<f64>> {
        self.precision.as_ref()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Per-arm empirical mean reward, `None` for unvisited arms.
    pub fn empirical_means(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .zip(&self.sums)
            .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
            .collect()
    }

    /// Number of rewards absorbed so far.
    pub fn t(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn arms(&self) -> usize {
        self.mu.len()
    }

    /// Absorbs one reward from `arm` (rank-one precision update, Kalman form).
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::invalid(format!("arm {arm} out of range for {} arms", self.arms())));
        }
        if !reward.is_finite() {
            return Err(Error::non_finite("reward"));
        }
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        let Some(precision) = self.precision.as_mut() else {
            return Ok(());
        };
        precision[(arm, arm)] += 1.0 / self.sigma_s_sq;

        let column = self.covariance.column(arm).clone_owned();
        let innovation_var = self.sigma_s_sq + column[arm];
        let gain = &column / innovation_var;
        let residual = reward - self.mu[arm];
        self.mu.axpy(residual, &gain, 1.0);
        self.covariance.ger(-1.0, &gain, &column, 1.0);
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5;
        self.covariance = sym;
        Ok(())
    }

    /// Functional form of [`BeliefState::update`].
    pub fn updated(&self, arm: usize, reward: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(arm, reward)?;
        Ok(next)
    }
}

/// `α_t = 1 / (√(2πe) · t)`.
pub fn ucl_alpha(t: usize) -> f64 {
    1.0 / ((2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt() * t as f64)
}

/// `Φ⁻¹(1 − α_t)`, the credible-limit multiplier at decision time `t`.
pub fn ucl_quantile(t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("decision times start at t = 1"));
    }
    let alpha = ucl_alpha(t);
    if alpha >= 1.0 {
        return Err(Error::invalid("α_t must be below 1"));
    }
    Ok(normal_quantile(1.0 - alpha))
}

/// Upper-credible-limit values `μ_i + σ_i Φ⁻¹(1 − α_t)` for the next decision, `t = state.t() + 1`.
pub fn ucl_heuristic(state: &BeliefState) -> Result<DVector<f64>> {
    let z = ucl_quantile(state.t() + 1)?;
    let diag = state.covariance.diagonal();
    let tolerance = -1e-12 * diag.amax().max(1.0);
    if diag.iter().any(|v| *v < tolerance || !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("belief covariance".into()));
    }
    Ok(DVector::from_iterator(
        state.arms(),
        state.mu.iter().zip(diag.iter()).map(|(m, v)| m + v.max(0.0).sqrt() * z),
    ))
}

/// Softmax probabilities with inverse temperature `log t / ν`; uniform at `t = 1`.
pub fn selection_probabilities(q: &DVector<f64>, t: usize, nu: f64) -> Result<DVector<f64>> {
    if t == 0 {
        return Err(Error::invalid("decision times start at t = 1"));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!("ν must be positive, got {nu}")));
    }
    if q.is_empty() {
        return Err(Error::shape("no arms to select from"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("heuristic values"));
    }
    let n = q.len();
    if t == 1 {
        return Ok(DVector::from_element(n, 1.0 / n as f64));
    }
    let beta = (t as f64).ln() / nu;
    let logits = q * beta;
    let max = logits.max();
    let w = logits.map(|l| (l - max).exp());
    let total = w.sum();
    Ok(w / total)
}

pub fn select_arm<R: rand::Rng + ?Sized>(q: &DVector<f64>, t: usize, nu: f64, rng: &mut R) -> Result<usize> {
    let p = selection_probabilities(q, t, nu)?;
    Ok(sample_index(p.as_slice(), rng))
}

/// One simulated run of the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Zero-based arm chosen at decisions `1..=T`.
    pub choices: Vec<usize>,
    pub rewards: Vec<f64>,
    pub seed: u64,
    pub params: UclParams,
}

impl EpisodeLog {
    pub fn horizon(&self) -> usize {
        self.choices.len()
    }
}

const SELECTION_STREAM: u64 = 0;
const REWARD_STREAM: u64 = 1;

/// Runs the agent for `env.horizon()` decisions. Arm selection and reward noise use
/// separate ChaCha streams of the same seed.
pub fn run_episode(env: &BanditEnv, params: &UclParams, seed: u64) -> Result<EpisodeLog> {
    let belief = BeliefState::from_params(params, env.locations())?;
    run_episode_from(env, belief, params, seed)
}

/// [`run_episode`] from an arbitrary initial belief.
pub fn run_episode_from(env: &BanditEnv, mut belief: BeliefState, params: &UclParams, seed: u64) -> Result<EpisodeLog> {
    params.validate()?;
    if belief.arms() != env.arms() {
        return Err(Error::shape("belief and environment disagree on the arm count"));
    }
    let mut selection_rng = ChaCha8Rng::seed_from_u64(seed);
    selection_rng.set_stream(SELECTION_STREAM);
    let mut reward_rng = ChaCha8Rng::seed_from_u64(seed);
    reward_rng.set_stream(REWARD_STREAM);

    let horizon = env.horizon();
    let mut choices = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let q = ucl_heuristic(&belief)?;
        let arm = select_arm(&q, t, params.nu, &mut selection_rng)?;
        let noise: f64 = StandardNormal.sample(&mut reward_rng);
        let reward = env.mean_rewards[arm] + env.reward_sd * noise;
        belief.update(arm, reward)?;
        choices.push(arm);
        rewards.push(reward);
    }
    Ok(EpisodeLog {
        choices,
        rewards,
        seed,
        params: *params,
    })
}

/// Exact heuristic values `Q̃^t` for every decision `t = 1..=T` of a recorded history.
pub fn replay_heuristics(
    params: &UclParams,
    locations: &[[f64; 2]],
    choices: &[usize],
    rewards: &[f64],
) -> Result<Vec<DVector<f64>>> {
    if choices.len() != rewards.len() {
        return Err(Error::shape("choices and rewards differ in length"));
    }
    let mut belief = BeliefState::from_params(params, locations)?;
    let mut out = Vec::with_capacity(choices.len());
    for (&arm, &reward) in choices.iter().zip(rewards) {
        out.push(ucl_heuristic(&belief)?);
        belief.update(arm, reward)?;
    }
    Ok(out)
}

/// `R_t = Σ_{s ≤ t} (max_i m_i − m_{i_s})`.
pub fn cumulative_regret(log: &EpisodeLog, env: &BanditEnv) -> Result<Vec<f64>> {
    regret_of_choices(&log.choices, env.mean_rewards())
}

pub fn regret_of_choices(choices: &[usize], means: &[f64]) -> Result<Vec<f64>> {
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    choices
        .iter()
        .map(|&arm| {
            let m = means
                .get(arm)
                .ok_or_else(|| Error::invalid(format!("arm {arm} out of range for {} arms", means.len())))?;
            total += best - m;
            Ok(total)
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use rand::Rng;

    fn params(mu0: f64, sigma0_sq: f64, lambda: f64, nu: f64) -> UclParams {
        UclParams {
            mu0,
            sigma0_sq,
            lambda,
            nu,
            sigma_s_sq: 0.01,
        }
    }

    /// Batch posterior from the full history: `Λ_t = diag(n)/σ_s² + Λ_0` and
    /// `μ_t = μ_0 + Σ_0 Hᵀ (H Σ_0 Hᵀ + σ_s² I)⁻¹ (r − H μ_0)`.
    fn batch_posterior(
        mu0: &DVector<f64>,
        sigma0: &DMatrix<f64>,
        sigma_s_sq: f64,
        choices: &[usize],
        rewards: &[f64],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let n = mu0.len();
        let t = choices.len();
        if t == 0 {
            return (mu0.clone(), sigma0.clone());
        }
        let h = DMatrix::from_fn(t, n, |s, j| if choices[s] == j { 1.0 } else { 0.0 });
        let r = DVector::from_column_slice(rewards);
        let gram = &h * sigma0 * h.transpose() + DMatrix::identity(t, t) * sigma_s_sq;
        let mu = mu0 + sigma0 * h.transpose() * gram.try_inverse().unwrap() * (r - &h * mu0);
        let mut precision = sigma0.clone().try_inverse().unwrap();
        for &c in choices {
            precision[(c, c)] += 1.0 / sigma_s_sq;
        }
        (mu, precision.try_inverse().unwrap())
    }

    #[test]
    fn spatial_prior_conventions() {
        let locs = grid_locations(2, 2);
        assert_eq!(build_spatial_prior(&locs, 0.0).unwrap(), DMatrix::identity(4, 4));
        let two = [[0.0, 0.0], [3.0, 4.0]];
        let s = build_spatial_prior(&two, 5.0).unwrap();
        assert!((s[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s[(0, 1)] - 0.367879).abs() < 1e-6);
        assert!(build_spatial_prior(&[[1.0, 1.0], [1.0, 1.0]], 1.0).is_err());
        assert!(build_spatial_prior(&two, -1.0).is_err());
    }

    #[test]
    fn grid_prior_is_positive_definite() {
        let s = build_spatial_prior(&grid_locations(10, 10), 4.0).unwrap();
        assert_eq!(s, s.transpose());
        let min = s.symmetric_eigen().eigenvalues.min();
        assert!(min > 0.0, "min eigenvalue {min}");
    }

    #[test]
    fn scalar_conjugate_update() {
        let p = UclParams {
            mu0: 0.0,
            sigma0_sq: 1.0,
            lambda: 0.0,
            nu: 1.0,
            sigma_s_sq: 1.0,
        };
        let b = BeliefState::from_params(&p, &[[0.0, 0.0]]).unwrap().updated(0, 2.0).unwrap();
        assert!((b.mean()[0] - 1.0).abs() < 1e-15);
        assert!((b.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((b.precision().unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn recursive_matches_batch_posterior() {
        let locs = grid_locations(5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &lambda in &[0.0, 1.0, 4.0] {
            let p = params(10.0, 4.0, lambda, 1.0);
            let sigma0 = build_spatial_prior(&locs, lambda).unwrap() * p.sigma0_sq;
            let mu0 = DVector::from_element(25, p.mu0);
            let mut belief = BeliefState::from_params(&p, &locs).unwrap();
            let (mut choices, mut rewards) = (vec![], vec![]);
            for _ in 0..30 {
                let arm = rng.random_range(0..25);
                let reward = 5.0 + rng.random::<f64>() * 10.0;
                belief.update(arm, reward).unwrap();
                choices.push(arm);
                rewards.push(reward);
                let (mu, cov) = batch_posterior(&mu0, &sigma0, p.sigma_s_sq, &choices, &rewards);
                assert!((belief.mean() - mu).amax() < 1e-8);
                assert!((belief.covariance() - &cov).amax() < 1e-8);
                let inv = belief.precision().unwrap().clone().try_inverse().unwrap();
                assert!((inv - cov).amax() <= 1e-8 * belief.covariance().amax());
            }
        }
    }

    #[test]
    fn uncorrelated_prior_updates_one_arm() {
        let p = params(0.0, 2.0, 0.0, 1.0);
        let before = BeliefState::from_params(&p, &grid_locations(2, 3)).unwrap();
        let after = before.updated(4, 3.0).unwrap();
        for i in 0..6 {
            if i != 4 {
                assert_eq!(after.mean()[i], before.mean()[i]);
                assert_eq!(after.covariance()[(i, i)], before.covariance()[(i, i)]);
            }
        }
        assert!(after.covariance()[(4, 4)] < before.covariance()[(4, 4)]);
    }

    #[test]
    fn zero_prior_variance_freezes_beliefs() {
        let p = params(7.0, 0.0, 1.0, 1.0);
        let mut b = BeliefState::from_params(&p, &grid_locations(2, 2)).unwrap();
        b.update(1, 100.0).unwrap();
        assert_eq!(b.mean().as_slice(), &[7.0; 4]);
        assert_eq!(b.counts(), &[0, 1, 0, 0]);
        assert_eq!(b.t(), 1);
        let q = ucl_heuristic(&b).unwrap();
        assert_eq!(q.as_slice(), &[7.0; 4]);
    }

    #[test]
    fn heuristic_at_first_decision() {
        let p = UclParams {
            mu0: 1.0,
            sigma0_sq: 4.0,
            lambda: 0.0,
            nu: 1.0,
            sigma_s_sq: 1.0,
        };
        let b = BeliefState::from_params(&p, &[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let q = ucl_heuristic(&b).unwrap();
        assert!((ucl_alpha(1) - 0.2419707245191433498).abs() < 1e-15);
        assert!((q[0] - (1.0 + 2.0 * 0.69997735099785076542)).abs() < 1e-12);
        assert!(ucl_quantile(0).is_err());
    }

    #[test]
    fn t_one_selection_is_uniform() {
        let q = DVector::from_vec(vec![100.0, -3.0, 0.0]);
        let p = selection_probabilities(&q, 1, 0.01).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn tiny_nu_selects_argmax() {
        let q = DVector::from_vec(vec![0.5, 0.9, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hits = (0..10_000).filter(|_| select_arm(&q, 2, 1e-6, &mut rng).unwrap() == 1).count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn equal_values_split_evenly() {
        let q = DVector::from_vec(vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hits = (0..10_000).filter(|_| select_arm(&q, 7, 0.3, &mut rng).unwrap() == 0).count();
        assert!((hits as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn noise_free_informed_agent_exploits() {
        let env = BanditEnv::new(vec![0.0, 1.0], 0.0, vec![[0.0, 0.0], [1.0, 0.0]], 50).unwrap();
        let p = UclParams {
            mu0: 0.0,
            sigma0_sq: 1e-6,
            lambda: 0.0,
            nu: 1e-3,
            sigma_s_sq: 1e-6,
        };
        let belief = BeliefState::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::identity(2, 2) * 1e-6, 1e-6).unwrap();
        let log = run_episode_from(&env, belief, &p, 12).unwrap();
        assert!(log.choices[1..].iter().all(|&a| a == 1));
    }

    #[test]
    fn episodes_are_seed_deterministic() {
        let landscape = Landscape::Unimodal {
            rows: 3,
            cols: 3,
            peak_column: 2,
            low: 0.0,
            high: 10.0,
        };
        let env = landscape.env(1.0, 20).unwrap();
        let p = params(5.0, 10.0, 1.0, 1.0);
        let a = run_episode(&env, &p, 42).unwrap();
        let b = run_episode(&env, &p, 42).unwrap();
        let c = run_episode(&env, &p, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.choices, c.choices);
        assert_eq!(a.horizon(), 20);
    }

    #[test]
    fn regret_examples() {
        let means = [0.0, 1.0, 0.25];
        assert_eq!(regret_of_choices(&[1, 1, 1], &means).unwrap(), vec![0.0; 3]);
        assert_eq!(regret_of_choices(&[2, 2, 2, 2], &means).unwrap(), vec![0.75, 1.5, 2.25, 3.0]);
        assert!(regret_of_choices(&[3], &means).is_err());
    }

    #[test]
    fn landscape_profiles() {
        let a = Landscape::Unimodal {
            rows: 2,
            cols: 10,
            peak_column: 6,
            low: 10.0,
            high: 50.0,
        }
        .means()
        .unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a[5], 50.0);
        assert_eq!(a[0], 10.0);
        assert_eq!(a[..10], a[10..]);
        let b = Landscape::Bimodal {
            rows: 1,
            cols: 10,
            trough_column: 4,
            trough: 5.0,
            local_peak: 30.0,
            global_peak: 45.0,
        }
        .means()
        .unwrap();
        assert_eq!(b[0], 30.0);
        assert_eq!(b[9], 45.0);
        assert_eq!(b[3], 5.0);
        let best = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, 45.0);
    }
}
