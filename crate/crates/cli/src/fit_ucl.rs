use std::fmt::Write as _;
use std::path::PathBuf;

use choicefit::bandit::grid_locations;
use choicefit::estimator::SolverOptions;
use choicefit::io::{dataset_to_csv, episode_from_csv};
use choicefit::linearize::{
    fit_population, fit_ucl, linearize_history, GroupComparison, GroupFit, LinearizationPoint, TransformedEstimate,
    UclEstimate, Validity,
};
use choicefit::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::report::{row_major, FitSummary, IdentificationSummary};
use crate::simulate::episode_stem;
use crate::{
    default_level, default_schema, read_config, read_text, resolve_input, write_json, write_text, CliError, CommonArgs,
    Outcome, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeInput {
    /// Episode CSV, relative to the config file.
    pub path: PathBuf,
    /// Population label; either every episode has one or none does.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// Nominal prior mean and variance to linearize about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointInput {
    pub mu0_bar: f64,
    pub sigma0_sq_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitUclConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub episodes: Vec<EpisodeInput>,
    pub rows: usize,
    pub cols: usize,
    pub points: Vec<PointInput>,
    pub lambda: f64,
    #[serde(default = "default_sigma_s_sq")]
    pub sigma_s_sq: f64,
    /// Length scales to refit at each episode's selected point.
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Also write each linearized feature dataset as CSV.
    #[serde(default)]
    pub write_features: bool,
}

fn default_sigma_s_sq() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Fitted,
    Unidentified,
    Failed,
}

/// `(ν, μ0, σ0²)` recovered from `θ̂`, with delta-method uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedSummary {
    pub nu: f64,
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub delta_mu: f64,
    pub delta_delta: f64,
    /// Row-major covariance of `(ν, μ0, σ0²)` from the delta method.
    pub delta_method_covariance: Option<Vec<f64>>,
    pub delta_method_standard_errors: Option<Vec<f64>>,
}

impl From<&TransformedEstimate> for TransformedSummary {
    fn from(t: &TransformedEstimate) -> Self {
        Self {
            nu: t.nu,
            mu0: t.mu0,
            sigma0_sq: t.sigma0_sq,
            delta_mu: t.delta_mu,
            delta_delta: t.delta_delta,
            delta_method_covariance: t.covariance.as_ref().map(row_major),
            delta_method_standard_errors: t
                .covariance
                .as_ref()
                .map(|c| c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFit {
    pub mu0_bar: f64,
    pub sigma0_sq_bar: f64,
    pub delta0_sq_bar: f64,
    pub status: PointStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification: Option<IdentificationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    /// Admissible range of `Δδ` for this episode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_bounds: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validity: Option<Validity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transformed: Option<TransformedSummary>,
    /// Per coordinate, whether the interval is wider than `|θ̂|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wide_intervals: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub status: PointStatus,
    pub log_likelihood: Option<f64>,
    pub theta_hat: Option<Vec<f64>>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFit {
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub points: Vec<PointFit>,
    /// One-based index of the highest-likelihood fitted point.
    pub selected_point: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lambda_grid: Vec<LambdaFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    /// One-based episode numbers.
    pub episodes: Vec<usize>,
    /// One-based index of the point with the highest summed log-likelihood.
    pub point: usize,
    pub pooled: FitSummary,
    /// Episodes left out of the pool for lack of a usable covariance.
    pub excluded_from_pool: Vec<usize>,
    pub transformed: Option<TransformedSummary>,
    /// Sum of the members' maximized log-likelihoods.
    pub total_log_likelihood: f64,
    /// Per-subject mean of the members' maximized log-likelihoods.
    pub mean_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchSummary {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub first: String,
    pub second: String,
    /// Per-coordinate two-sided Welch tests on the members' `θ̂`.
    pub tests: Option<Vec<WelchSummary>>,
    /// Bonferroni-adjusted p-value across the three coordinates.
    pub family_p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<ComparisonSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitUclReport {
    pub schema_version: u32,
    pub level: f64,
    pub episodes: Vec<EpisodeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSummary>,
}

impl FitUclReport {
    /// One row per episode and point.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from(
            "episode,point,mu0_bar,sigma0_sq_bar,status,converged,log_likelihood,theta_1,theta_2,theta_3,validity,nu,mu0,sigma0_sq,selected\n",
        );
        let num = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for (e, episode) in self.episodes.iter().enumerate() {
            for (p, point) in episode.points.iter().enumerate() {
                let fit = point.fit.as_ref();
                let theta = |j: usize| num(fit.map(|f| f.theta_hat[j]));
                let tr = point.transformed.as_ref();
                let validity = match point.validity {
                    Some(Validity::Valid) => "valid",
                    Some(Validity::NonPositiveTheta1) => "non-positive-theta1",
                    Some(Validity::DeltaOutOfBounds) => "delta-out-of-bounds",
                    None => "",
                };
                let status = match point.status {
                    PointStatus::Fitted => "fitted",
                    PointStatus::Unidentified => "unidentified",
                    PointStatus::Failed => "failed",
                };
                writeln!(
                    out,
                    "{},{},{:?},{:?},{},{},{},{},{},{},{},{},{},{},{}",
                    e + 1,
                    p + 1,
                    point.mu0_bar,
                    point.sigma0_sq_bar,
                    status,
                    fit.map(|f| f.converged.to_string()).unwrap_or_default(),
                    num(fit.map(|f| f.log_likelihood)),
                    theta(0),
                    theta(1),
                    theta(2),
                    validity,
                    num(tr.map(|t| t.nu)),
                    num(tr.map(|t| t.mu0)),
                    num(tr.map(|t| t.sigma0_sq)),
                    episode.selected_point == Some(p + 1)
                )
                .unwrap();
            }
        }
        out
    }
}

/// Everything `fit-ucl` computes, before any file is written.
#[derive(Debug, Clone)]
pub struct FitUclRun {
    pub report: FitUclReport,
    pub outcome: Outcome,
    /// `estimates[e][p]` for episode `e` at point `p`.
    pub estimates: Vec<Vec<Option<UclEstimate>>>,
    /// Feature CSVs keyed by file name, when requested.
    pub features: Vec<(String, String)>,
}

pub fn run(args: &CommonArgs) -> Result<Outcome, CliError> {
    let mut config: FitUclConfig = read_config(&args.config)?;
    let mut histories = Vec::with_capacity(config.episodes.len());
    for episode in &mut config.episodes {
        episode.path = resolve_input(&args.config, &episode.path)?;
        let text = read_text(&episode.path)?;
        histories.push(episode_from_csv(&text).map_err(|e| CliError::input(&episode.path, e))?);
    }
    let result = fit_ucl_histories(&config, &histories)?;
    for (name, csv) in &result.features {
        write_text(&args.out_dir, name, csv)?;
    }
    write_text(&args.out_dir, "comparison.csv", &result.report.comparison_csv())?;
    write_json(&args.out_dir, "fit_ucl.json", &result.report)?;
    write_json(&args.out_dir, "fit_ucl_config.json", &config)?;
    Ok(result.outcome)
}

fn validate(config: &FitUclConfig, episodes: usize) -> Result<(), CliError> {
    if config.episodes.len() != episodes || episodes == 0 {
        return Err(CliError::Config("fit-ucl needs at least one episode".into()));
    }
    if config.points.is_empty() {
        return Err(CliError::Config("fit-ucl needs at least one linearization point".into()));
    }
    if config.rows == 0 || config.cols == 0 {
        return Err(CliError::Config("grid rows and cols must be positive".into()));
    }
    let labeled = config.episodes.iter().filter(|e| e.group.is_some()).count();
    if labeled != 0 && labeled != episodes {
        return Err(CliError::Config("either every episode has a group or none does".into()));
    }
    Ok(())
}

/// Linearizes and fits each `(choices, rewards)` history at every point.
pub fn fit_ucl_histories(config: &FitUclConfig, histories: &[(Vec<usize>, Vec<f64>)]) -> Result<FitUclRun, CliError> {
    validate(config, histories.len())?;
    let locations = grid_locations(config.rows, config.cols);
    let points = config
        .points
        .iter()
        .map(|p| LinearizationPoint::from_prior_variance(p.mu0_bar, p.sigma0_sq_bar, config.lambda, config.sigma_s_sq))
        .collect::<Result<Vec<_>, _>>()?;

    type PerEpisode = (Vec<(PointFit, Option<UclEstimate>)>, Vec<(String, String)>);
    let per_episode: Vec<PerEpisode> = histories
        .par_iter()
        .enumerate()
        .map(|(e, (choices, rewards))| -> Result<PerEpisode, CliError> {
            let mut fits = Vec::with_capacity(points.len());
            let mut features = Vec::new();
            for (p, point) in points.iter().enumerate() {
                let dataset = linearize_history(choices, rewards, &locations, point)?;
                if config.write_features {
                    features.push((
                        format!("{}_point_{}_features.csv", episode_stem(e), p + 1),
                        dataset_to_csv(&dataset.data),
                    ));
                }
                fits.push(fit_point(&config.points[p], point, fit_ucl(&dataset, &config.solver), config.level)?);
            }
            Ok((fits, features))
        })
        .collect::<Result<_, _>>()?;

    let mut outcome = Outcome::Success;
    let mut episodes = Vec::with_capacity(histories.len());
    let mut estimates = Vec::with_capacity(histories.len());
    let mut features = Vec::new();
    for (e, (fits, files)) in per_episode.into_iter().enumerate() {
        features.extend(files);
        let (point_fits, point_estimates): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
        let selected = select_point(&point_estimates);
        outcome = outcome.worst(match selected.map(|p| point_estimates[p].as_ref().unwrap()) {
            None => Outcome::Unidentified,
            Some(est) if !est.fit.converged => Outcome::NotConverged,
            Some(est) if est.transformed.is_none() => Outcome::InvalidTransform,
            Some(_) => Outcome::Success,
        });
        let lambda_grid = match selected {
            Some(p) => lambda_refits(config, &histories[e], &locations, &config.points[p])?,
            None => Vec::new(),
        };
        episodes.push(EpisodeFit {
            path: config.episodes[e].path.clone(),
            group: config.episodes[e].group.clone(),
            points: point_fits,
            selected_point: selected.map(|p| p + 1),
            lambda_grid,
        });
        estimates.push(point_estimates);
    }

    let population = if config.episodes.iter().all(|e| e.group.is_some()) {
        let labels: Vec<String> = config.episodes.iter().map(|e| e.group.clone().unwrap()).collect();
        Some(population(&labels, &estimates, config.level)?)
    } else {
        None
    };
    Ok(FitUclRun {
        report: FitUclReport {
            schema_version: SCHEMA_VERSION,
            level: config.level,
            episodes,
            population,
        },
        outcome,
        estimates,
        features,
    })
}

fn fit_point(
    input: &PointInput,
    point: &LinearizationPoint,
    result: choicefit::Result<UclEstimate>,
    level: f64,
) -> Result<(PointFit, Option<UclEstimate>), CliError> {
    let mut out = PointFit {
        mu0_bar: input.mu0_bar,
        sigma0_sq_bar: input.sigma0_sq_bar,
        delta0_sq_bar: point.delta0_sq_bar,
        status: PointStatus::Fitted,
        message: None,
        identification: None,
        fit: None,
        delta_bounds: None,
        validity: None,
        transformed: None,
        wide_intervals: None,
    };
    let estimate = match result {
        Ok(estimate) => estimate,
        Err(Error::Unidentified(message)) => {
            out.status = PointStatus::Unidentified;
            out.message = Some(message);
            return Ok((out, None));
        }
        Err(e) => {
            out.status = PointStatus::Failed;
            out.message = Some(e.to_string());
            return Ok((out, None));
        }
    };
    let fit = FitSummary::new(&estimate.fit, level)?;
    out.wide_intervals = fit.confidence_interval.as_ref().map(|ci| {
        (0..3)
            .map(|j| ci.upper[j] - ci.lower[j] > fit.theta_hat[j].abs())
            .collect()
    });
    out.identification = Some((&estimate.identification).into());
    out.fit = Some(fit);
    out.delta_bounds = Some([estimate.bounds.0, estimate.bounds.1]);
    out.validity = Some(estimate.validity);
    out.transformed = estimate.transformed.as_ref().map(Into::into);
    if estimate.transformed.is_none() {
        out.message = Some("θ̂ does not map to a positive ν and σ0²".into());
    }
    Ok((out, Some(estimate)))
}

/// Index of the fitted point with the highest log-likelihood; ties keep the first.
fn select_point(estimates: &[Option<UclEstimate>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (p, est) in estimates.iter().enumerate() {
        if let Some(est) = est {
            let ll = est.fit.log_likelihood;
            if best.is_none_or(|(_, b)| ll > b) {
                best = Some((p, ll));
            }
        }
    }
    best.map(|(p, _)| p)
}

fn lambda_refits(
    config: &FitUclConfig,
    (choices, rewards): &(Vec<usize>, Vec<f64>),
    locations: &[[f64; 2]],
    input: &PointInput,
) -> Result<Vec<LambdaFit>, CliError> {
    config
        .lambda_grid
        .iter()
        .map(|&lambda| {
            let point = LinearizationPoint::from_prior_variance(input.mu0_bar, input.sigma0_sq_bar, lambda, config.sigma_s_sq)?;
            let dataset = linearize_history(choices, rewards, locations, &point)?;
            Ok(match fit_ucl(&dataset, &config.solver) {
                Ok(est) => LambdaFit {
                    lambda,
                    status: PointStatus::Fitted,
                    log_likelihood: Some(est.fit.log_likelihood),
                    theta_hat: Some(est.theta().to_vec()),
                    converged: Some(est.fit.converged),
                },
                Err(e) => LambdaFit {
                    lambda,
                    status: if matches!(e, Error::Unidentified(_)) {
                        PointStatus::Unidentified
                    } else {
                        PointStatus::Failed
                    },
                    log_likelihood: None,
                    theta_hat: None,
                    converged: None,
                },
            })
        })
        .collect()
}

/// Per group, pools the members at the point with the highest summed
/// log-likelihood among points every member was fitted at.
fn population(
    labels: &[String],
    estimates: &[Vec<Option<UclEstimate>>],
    level: f64,
) -> Result<PopulationSummary, CliError> {
    let mut order: Vec<&String> = Vec::new();
    for label in labels {
        if !order.contains(&label) {
            order.push(label);
        }
    }
    let points = estimates[0].len();
    let mut chosen = Vec::new();
    let mut chosen_labels = Vec::new();
    let mut chosen_point = Vec::new();
    let mut members_of = Vec::new();
    for label in order {
        let members: Vec<usize> = (0..labels.len()).filter(|&e| &labels[e] == label).collect();
        let best = (0..points)
            .filter_map(|p| {
                let total: Option<f64> = members
                    .iter()
                    .map(|&e| estimates[e][p].as_ref().map(|est| est.fit.log_likelihood))
                    .sum();
                total.map(|t| (p, t))
            })
            .fold(None, |acc: Option<(usize, f64)>, (p, t)| match acc {
                Some((_, b)) if b >= t => acc,
                _ => Some((p, t)),
            });
        let Some((p, _)) = best else {
            return Err(CliError::Config(format!(
                "group {label:?} has no linearization point at which every member was fitted"
            )));
        };
        for &e in &members {
            chosen.push(estimates[e][p].clone().unwrap());
            chosen_labels.push(label.clone());
        }
        chosen_point.push(p);
        members_of.push(members);
    }
    let fit = fit_population(&chosen, &chosen_labels)?;
    let groups = fit
        .groups
        .iter()
        .zip(chosen_point)
        .zip(&members_of)
        .map(|((g, p), members)| group_summary(g, p, members, level))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PopulationSummary {
        groups,
        comparisons: fit.comparisons.iter().map(comparison_summary).collect(),
    })
}

fn group_summary(group: &GroupFit, point: usize, members: &[usize], level: f64) -> Result<GroupSummary, CliError> {
    Ok(GroupSummary {
        label: group.label.clone(),
        episodes: members.iter().map(|e| e + 1).collect(),
        point: point + 1,
        pooled: FitSummary::new(&group.pooled.fit, level)?,
        excluded_from_pool: group.pooled.excluded.iter().map(|&k| members[k] + 1).collect(),
        transformed: group.transformed.as_ref().map(Into::into),
        total_log_likelihood: group.total_log_likelihood,
        mean_log_likelihood: group.mean_log_likelihood,
    })
}

fn comparison_summary(c: &GroupComparison) -> ComparisonSummary {
    ComparisonSummary {
        first: c.first.clone(),
        second: c.second.clone(),
        tests: c.tests.as_ref().map(|ts| {
            ts.iter()
                .map(|t| WelchSummary {
                    t: t.t,
                    degrees_of_freedom: t.degrees_of_freedom,
                    p_value: t.p_value,
                })
                .collect()
        }),
        family_p_value: c.family_p_value,
    }
}
