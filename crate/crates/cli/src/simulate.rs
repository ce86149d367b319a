use choicefit::bandit::{run_episode, Landscape, UclParams};
use choicefit::io::{dataset_to_csv, episode_to_csv};
use choicefit::simulate::{gaussian_features, replicate_seed, simulate_choices, stream_rng};
use choicefit::ParamVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{default_schema, read_config, write_json, write_text, CliError, CommonArgs, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SimulateConfig {
    /// Standard-normal features with softmax responses at `theta`.
    Linear(LinearSimulation),
    /// Stochastic UCL episodes on a grid landscape.
    Ucl(UclSimulation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSimulation {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub options: usize,
    pub theta: Vec<f64>,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UclSimulation {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub landscape: Landscape,
    pub reward_sd: f64,
    pub horizon: usize,
    pub params: UclParams,
    #[serde(default = "one")]
    pub episodes: usize,
    /// Index of the first episode; episode `k` draws from replicate stream `first_episode + k`.
    #[serde(default)]
    pub first_episode: usize,
}

fn one() -> usize {
    1
}

/// File stem of the zero-based episode `index`.
pub fn episode_stem(index: usize) -> String {
    format!("episode_{:03}", index + 1)
}

pub fn run(args: &CommonArgs) -> Result<Outcome, CliError> {
    let mut config: SimulateConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        match &mut config {
            SimulateConfig::Linear(c) => c.seed = seed,
            SimulateConfig::Ucl(c) => c.seed = seed,
        }
    }
    match &config {
        SimulateConfig::Linear(c) => {
            let csv = simulate_linear(c)?;
            write_text(&args.out_dir, "dataset.csv", &csv)?;
            write_json(&args.out_dir, "dataset.json", &config)?;
        }
        SimulateConfig::Ucl(c) => {
            for (index, csv) in simulate_ucl(c)? {
                let stem = episode_stem(index);
                write_text(&args.out_dir, &format!("{stem}.csv"), &csv)?;
                let single = SimulateConfig::Ucl(UclSimulation {
                    episodes: 1,
                    first_episode: index,
                    ..c.clone()
                });
                write_json(&args.out_dir, &format!("{stem}.json"), &single)?;
            }
            write_json(&args.out_dir, "simulate.json", &config)?;
        }
    }
    Ok(Outcome::Success)
}

/// Dataset CSV for a linear simulation.
pub fn simulate_linear(config: &LinearSimulation) -> Result<String, CliError> {
    if config.options < 2 || config.observations == 0 || config.theta.is_empty() {
        return Err(CliError::Config(
            "linear simulation needs options >= 2, observations >= 1 and a non-empty theta".into(),
        ));
    }
    let theta = ParamVector::from_slice(&config.theta)?;
    let mut rng = stream_rng(config.seed, 0);
    let blocks = gaussian_features(config.observations, config.options, theta.len(), &mut rng);
    let data = simulate_choices(&blocks, &theta, &mut rng)?;
    Ok(dataset_to_csv(&data))
}

/// `(episode index, episode CSV)` pairs in index order.
pub fn simulate_ucl(config: &UclSimulation) -> Result<Vec<(usize, String)>, CliError> {
    if config.episodes == 0 {
        return Err(CliError::Config("episodes must be at least 1".into()));
    }
    let env = config.landscape.env(config.reward_sd, config.horizon)?;
    (config.first_episode..config.first_episode + config.episodes)
        .into_par_iter()
        .map(|index| {
            let log = run_episode(&env, &config.params, replicate_seed(config.seed, index as u64))?;
            Ok((index, episode_to_csv(&log.choices, &log.rewards)))
        })
        .collect()
}
