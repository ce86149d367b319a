//! Reproducible experiments around the `choicefit` library.
//!
//! Every subcommand reads one JSON config, writes its results into an output
//! directory and drops a sidecar copy of the effective config next to them.
//! Feeding a sidecar back in as `--config` repeats the run exactly.

pub mod error;
pub mod estimate;
pub mod fit_ucl;
pub mod recover;
pub mod regret;
pub mod report;
pub mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::CliError;

/// Version stamped into every result file and accepted in configs.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "choicefit", version, about = "Softmax choice-model estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a linear-objective choice dataset or stochastic UCL episodes.
    Simulate(CommonArgs),
    /// Fit a choice dataset by maximum likelihood or MAP.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Fit even when the identification check fails.
        #[arg(long)]
        force: bool,
    },
    /// Ensemble parameter recovery with features held fixed across replicates.
    Recover(CommonArgs),
    /// Linearize UCL episodes about nominal priors and fit them.
    FitUcl(CommonArgs),
    /// Label episodes by the growth rate of their cumulative regret.
    ClassifyRegret(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for result files; created if missing.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// How a command finished. Failures the caller may want to script around get
/// their own exit codes; results are still written where possible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Unidentified,
    NotConverged,
    InvalidTransform,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Unidentified => 2,
            Outcome::NotConverged => 3,
            Outcome::InvalidTransform => 4,
        }
    }

    /// The more severe of two outcomes, severity following exit-code order.
    pub fn worst(self, other: Outcome) -> Outcome {
        let rank = |o: Outcome| match o {
            Outcome::Success => 0,
            Outcome::InvalidTransform => 1,
            Outcome::NotConverged => 2,
            Outcome::Unidentified => 3,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Recover(c) | Command::FitUcl(c) | Command::ClassifyRegret(c) => c,
        Command::Estimate { common, .. } => common,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(c) => simulate::run(c),
        Command::Estimate { common, force } => estimate::run(common, *force),
        Command::Recover(c) => recover::run(c),
        Command::FitUcl(c) => fit_ucl::run(c),
        Command::ClassifyRegret(c) => regret::run(c),
    })
}

/// Reads a config, rejecting unknown keys and foreign schema versions.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    if let Some(v) = value.get("schema_version") {
        if v.as_u64() != Some(u64::from(SCHEMA_VERSION)) {
            return Err(CliError::Config(format!(
                "{}: schema_version {v} is not supported (expected {SCHEMA_VERSION})",
                path.display()
            )));
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::json(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Resolves `path` against the directory holding the config file and makes it absolute.
pub fn resolve_input(config: &Path, path: &Path) -> Result<PathBuf, CliError> {
    let joined = if path.is_absolute() {
        path.to_path_buf()
    } else {
        config.parent().unwrap_or_else(|| Path::new(".")).join(path)
    };
    joined.canonicalize().map_err(|e| CliError::io(&joined, e))
}

pub fn write_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(&dir.join(name), e))?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn default_level() -> f64 {
    0.95
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_and_severity() {
        assert_eq!(Outcome::Success.code(), 0);
        assert_eq!(Outcome::Unidentified.code(), 2);
        assert_eq!(Outcome::NotConverged.code(), 3);
        assert_eq!(Outcome::InvalidTransform.code(), 4);
        assert_eq!(Outcome::InvalidTransform.worst(Outcome::NotConverged), Outcome::NotConverged);
        assert_eq!(Outcome::Unidentified.worst(Outcome::InvalidTransform), Outcome::Unidentified);
        assert_eq!(Outcome::Success.worst(Outcome::Success), Outcome::Success);
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["choicefit", "estimate", "--config", "a.json", "--force", "--seed", "3"]).unwrap();
        match cli.command {
            Command::Estimate { common, force } => {
                assert!(force);
                assert_eq!(common.seed, Some(3));
                assert_eq!(common.out_dir, PathBuf::from("."));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["choicefit", "fit-ucl"]).is_err());
    }
}
