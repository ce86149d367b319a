use choicefit::bandit::{grid_locations, replay_heuristics, UclParams};
use choicefit::linearize::{linearized_coefficients, theta_from_deviations, LinearizationPoint};
use choicefit::simulate::stream_rng;
use nalgebra::DVector;
use rand::Rng;

struct Config {
    rows: usize,
    cols: usize,
    lambda: f64,
    mu0_bar: f64,
    sigma0_sq_bar: f64,
    nu: f64,
    horizon: usize,
    seed: u64,
}

/// Twenty configurations spanning grid size, length scale, nominal prior and horizon.
fn configs() -> Vec<Config> {
    let mut rng = stream_rng(2024, 0);
    (0..20)
        .map(|k| Config {
            rows: 2 + k % 4,
            cols: 2 + (k / 4) % 4,
            lambda: [0.0, 0.5, 1.0, 2.0, 4.0][k % 5],
            mu0_bar: rng.random_range(10.0..60.0),
            sigma0_sq_bar: rng.random_range(0.2..20.0),
            nu: rng.random_range(0.5..5.0),
            horizon: rng.random_range(10..40),
            seed: k as u64,
        })
        .collect()
}

fn history(config: &Config) -> (Vec<usize>, Vec<f64>) {
    let arms = config.rows * config.cols;
    let mut rng = stream_rng(config.seed, 1);
    let choices: Vec<usize> = (0..config.horizon).map(|_| rng.random_range(0..arms)).collect();
    let rewards = choices
        .iter()
        .map(|&a| 15.0 + 2.0 * a as f64 + rng.random_range(-3.0..3.0))
        .collect();
    (choices, rewards)
}

/// Largest gap between `Q_t · log t / ν` of the exact agent and the linearized
/// utilities at `(Δμ, Δδ)` from the point.
fn gap(config: &Config, point: &LinearizationPoint, delta_mu: f64, delta_delta: f64) -> f64 {
    let locations = grid_locations(config.rows, config.cols);
    let (choices, rewards) = history(config);
    let params = UclParams {
        mu0: point.mu0_bar + delta_mu,
        sigma0_sq: point.sigma_s_sq / (point.delta0_sq_bar + delta_delta),
        lambda: config.lambda,
        nu: config.nu,
        sigma_s_sq: point.sigma_s_sq,
    };
    let exact = replay_heuristics(&params, &locations, &choices, &rewards).unwrap();
    let coefficients = linearized_coefficients(&choices, &rewards, &locations, point).unwrap();
    let theta = DVector::from_row_slice(&theta_from_deviations(config.nu, delta_mu, delta_delta));
    exact
        .iter()
        .zip(&coefficients.steps)
        .map(|(q, step)| {
            let scaled = q * (step.t as f64).ln() / config.nu;
            (scaled - step.features().unwrap() * &theta).amax()
        })
        .fold(0.0, f64::max)
}

fn point(config: &Config) -> LinearizationPoint {
    LinearizationPoint::from_prior_variance(config.mu0_bar, config.sigma0_sq_bar, config.lambda, 0.01).unwrap()
}

#[test]
fn exact_at_zero_deviation() {
    for (k, config) in configs().iter().enumerate() {
        let g = gap(config, &point(config), 0.0, 0.0);
        assert!(g < 1e-8, "config {k}: gap {g:e}");
    }
}

#[test]
fn mean_deviations_are_exact() {
    for (k, config) in configs().iter().enumerate() {
        let g = gap(config, &point(config), 7.5, 0.0);
        assert!(g < 1e-8, "config {k}: gap {g:e}");
    }
}

#[test]
fn error_halves_quadratically() {
    for (k, config) in configs().iter().enumerate() {
        let p = point(config);
        let (dm, dd) = (4.0, 0.2 * p.delta0_sq_bar);
        let ratio = gap(config, &p, dm, dd) / gap(config, &p, dm / 2.0, dd / 2.0);
        assert!((3.5..=4.5).contains(&ratio), "config {k}: ratio {ratio}");
    }
}
