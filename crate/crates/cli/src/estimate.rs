use std::path::PathBuf;

use choicefit::estimator::{check_identification, SolverOptions, DEFAULT_RELATIVE_THRESHOLD};
use choicefit::io::dataset_from_csv;
use choicefit::model::{FlatPrior, GaussianPrior};
use choicefit::{fit_map, fit_ml, ChoiceDataset, FitResult, ParamVector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::report::{FitSummary, IdentificationSummary};
use crate::{
    default_level, default_schema, read_config, read_text, resolve_input, write_json, CliError, CommonArgs, Outcome,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    #[default]
    Ml,
    Map,
}

/// Gaussian prior for MAP fits: give either `variances` (independent
/// coordinates) or a row-major `covariance`. Without a prior, MAP uses a flat one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub dataset: PathBuf,
    #[serde(default)]
    pub method: FitMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub method: FitMethod,
    pub identification: IdentificationSummary,
    #[serde(flatten)]
    pub fit: FitSummary,
}

pub fn run(args: &CommonArgs, force: bool) -> Result<Outcome, CliError> {
    let mut config: EstimateConfig = read_config(&args.config)?;
    config.dataset = resolve_input(&args.config, &config.dataset)?;
    config.force |= force;
    let text = read_text(&config.dataset)?;
    let data = dataset_from_csv(&text).map_err(|e| CliError::input(&config.dataset, e))?;

    let (report, outcome) = estimate(&data, &config)?;
    write_json(&args.out_dir, "estimate.json", &config)?;
    if let Some(report) = report {
        write_json(&args.out_dir, "fit.json", &report)?;
    } else {
        eprintln!(
            "refusing to fit: the dataset is not identified (min eigenvalue of the second-moment matrix {:.3e}); pass --force to fit anyway",
            check_identification(&data, DEFAULT_RELATIVE_THRESHOLD).min_eigenvalue
        );
    }
    Ok(outcome)
}

/// Identification check followed by the configured fit. `None` when the data
/// are not identified and the config does not force a fit.
pub fn estimate(data: &ChoiceDataset, config: &EstimateConfig) -> Result<(Option<EstimateReport>, Outcome), CliError> {
    let identification = check_identification(data, DEFAULT_RELATIVE_THRESHOLD);
    if !identification.identified && !config.force {
        return Ok((None, Outcome::Unidentified));
    }
    let init = match &config.init {
        Some(v) => ParamVector::from_slice(v)?,
        None => ParamVector::zeros(data.features()),
    };
    let fit = fit_with(data, config, &init)?;
    let outcome = if fit.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    };
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        method: config.method,
        identification: (&identification).into(),
        fit: FitSummary::new(&fit, config.level)?,
    };
    Ok((Some(report), outcome))
}

fn fit_with(data: &ChoiceDataset, config: &EstimateConfig, init: &ParamVector) -> Result<FitResult, CliError> {
    Ok(match (config.method, &config.prior) {
        (FitMethod::Ml, None) => fit_ml(data, init, &config.solver)?,
        (FitMethod::Ml, Some(_)) => {
            return Err(CliError::Config("a prior was given but method is \"ml\"".into()));
        }
        (FitMethod::Map, None) => fit_map(data, &FlatPrior, init, &config.solver)?,
        (FitMethod::Map, Some(p)) => fit_map(data, &gaussian_prior(p)?, init, &config.solver)?,
    })
}

fn gaussian_prior(config: &PriorConfig) -> Result<GaussianPrior, CliError> {
    let mean = DVector::from_column_slice(&config.mean);
    let n = mean.len();
    match (&config.variances, &config.covariance) {
        (Some(v), None) => Ok(GaussianPrior::diagonal(mean, v)?),
        (None, Some(c)) => {
            if c.len() != n * n {
                return Err(CliError::Config(format!(
                    "prior covariance has {} entries, expected {}",
                    c.len(),
                    n * n
                )));
            }
            Ok(GaussianPrior::new(mean, DMatrix::from_row_slice(n, n, c))?)
        }
        _ => Err(CliError::Config(
            "prior needs exactly one of \"variances\" or \"covariance\"".into(),
        )),
    }
}
