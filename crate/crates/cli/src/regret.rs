use std::fmt::Write as _;
use std::path::PathBuf;

use choicefit::bandit::{regret_of_choices, Landscape};
use choicefit::io::episode_from_csv;
use serde::{Deserialize, Serialize};

use crate::{default_schema, read_config, read_text, resolve_input, write_json, write_text, CliError, CommonArgs, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Episode CSVs, relative to the config file.
    pub episodes: Vec<PathBuf>,
    pub landscape: Landscape,
    /// Start of the fitting window as a fraction of the horizon.
    #[serde(default = "default_window_start")]
    pub window_start: f64,
    /// Slopes below this fraction of the linear-growth slope of one count as log-law.
    #[serde(default = "default_log_law_slope")]
    pub log_law_slope: f64,
}

fn default_window_start() -> f64 {
    0.5
}

fn default_log_law_slope() -> f64 {
    0.4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretClass {
    /// No regret at the horizon.
    Optimal,
    LogLaw,
    Linear,
    /// Fewer than two positive regret values in the window.
    Undetermined,
}

impl RegretClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RegretClass::Optimal => "optimal",
            RegretClass::LogLaw => "log-law",
            RegretClass::Linear => "linear",
            RegretClass::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub final_regret: f64,
    /// Slope of `log R_t` on `log t` over the window.
    pub slope: Option<f64>,
    pub class: RegretClass,
}

/// Labels a cumulative regret series `R_1..R_T` by its log-log growth rate.
///
/// Linear growth has slope one and logarithmic growth has slope near zero late
/// in an episode, so a slope below `threshold` is labeled log-law. The
/// threshold is a heuristic, not a derived cut-off.
pub fn classify_regret(regret: &[f64], window_start: f64, threshold: f64) -> Result<Classification, CliError> {
    if regret.is_empty() || !(0.0..1.0).contains(&window_start) {
        return Err(CliError::Config(
            "regret classification needs a non-empty series and window_start in [0, 1)".into(),
        ));
    }
    let horizon = regret.len();
    let final_regret = regret[horizon - 1];
    if final_regret <= 0.0 {
        return Ok(Classification {
            final_regret,
            slope: None,
            class: RegretClass::Optimal,
        });
    }
    let first = ((window_start * horizon as f64).ceil() as usize).max(1);
    let points: Vec<(f64, f64)> = (first..=horizon)
        .filter(|&t| regret[t - 1] > 0.0)
        .map(|t| ((t as f64).ln(), regret[t - 1].ln()))
        .collect();
    let slope = ols_slope(&points);
    let class = match slope {
        None => RegretClass::Undetermined,
        Some(b) if b < threshold => RegretClass::LogLaw,
        Some(_) => RegretClass::Linear,
    };
    Ok(Classification {
        final_regret,
        slope,
        class,
    })
}

fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn run(args: &CommonArgs) -> Result<Outcome, CliError> {
    let mut config: ClassifyConfig = read_config(&args.config)?;
    let means = config.landscape.means()?;
    let mut out = String::from("episode,path,horizon,final_regret,slope,class\n");
    for (k, path) in config.episodes.iter_mut().enumerate() {
        *path = resolve_input(&args.config, path)?;
        let text = read_text(path)?;
        let (choices, _) = episode_from_csv(&text).map_err(|e| CliError::input(path, e))?;
        let regret = regret_of_choices(&choices, &means).map_err(|e| CliError::input(path, e))?;
        let c = classify_regret(&regret, config.window_start, config.log_law_slope)?;
        writeln!(
            out,
            "{},{},{},{:?},{},{}",
            k + 1,
            path.display(),
            regret.len(),
            c.final_regret,
            c.slope.map(|s| format!("{s:?}")).unwrap_or_default(),
            c.class.as_str()
        )
        .unwrap();
    }
    write_text(&args.out_dir, "regret_classes.csv", &out)?;
    write_json(&args.out_dir, "classify.json", &config)?;
    Ok(Outcome::Success)
}
