use choicefit::estimator::{check_identification, confidence_intervals, DEFAULT_RELATIVE_THRESHOLD};
use choicefit::model::{log_likelihood, log_likelihood_gradient, GaussianPrior};
use choicefit::simulate::{gaussian_features, replicate_seed, simulate_choices, stream_rng};
use choicefit::{fit_map, fit_ml, ChoiceDataset, ParamVector, SolverOptions};
use nalgebra::DVector;
use rayon::prelude::*;

/// Standard-normal features with responses drawn at `theta`.
fn fixture(seed: u64, n: usize, m: usize, theta: &[f64]) -> ChoiceDataset {
    let theta = ParamVector::from_slice(theta).unwrap();
    let mut rng = stream_rng(seed, 0);
    let blocks = gaussian_features(n, m, theta.len(), &mut rng);
    simulate_choices(&blocks, &theta, &mut rng).unwrap()
}

#[test]
fn scalar_fixture_recovers_the_truth() {
    let data = fixture(7, 1000, 10, &[4.0]);
    let fit = fit_ml(&data, &ParamVector::zeros(1), &SolverOptions::default()).unwrap();
    assert!(fit.converged);
    let ci = confidence_intervals(&fit, 0.95).unwrap();
    assert!(ci.lower[0] <= 4.0 && 4.0 <= ci.upper[0], "{ci:?}");
    let g = log_likelihood_gradient(&data, &fit.theta_hat).unwrap();
    assert!(g.amax() <= SolverOptions::default().tolerance);
}

#[test]
fn likelihood_grid_peaks_near_the_truth() {
    let data = fixture(3, 1000, 10, &[4.0]);
    let best = (0..=80)
        .map(|k| 2.0 + 0.05 * k as f64)
        .map(|t| (t, log_likelihood(&data, &ParamVector::from_slice(&[t]).unwrap()).unwrap()))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    assert!((best.0 - 4.0).abs() < 0.5, "grid maximizer {}", best.0);
}

#[test]
fn wald_intervals_cover_at_the_nominal_rate() {
    let covered = (0..100u64)
        .into_par_iter()
        .filter(|&r| {
            let data = fixture(replicate_seed(55, r), 500, 10, &[4.0]);
            let fit = fit_ml(&data, &ParamVector::zeros(1), &SolverOptions::default()).unwrap();
            let ci = confidence_intervals(&fit, 0.95).unwrap();
            ci.lower[0] <= 4.0 && 4.0 <= ci.upper[0]
        })
        .count();
    assert!((90..=99).contains(&covered), "{covered} of 100 intervals cover");
}

#[test]
fn gaussian_prior_shrinks_toward_zero() {
    let data = fixture(7, 1000, 10, &[4.0]);
    let ml = fit_ml(&data, &ParamVector::zeros(1), &SolverOptions::default()).unwrap();
    let prior = GaussianPrior::diagonal(DVector::zeros(1), &[0.1]).unwrap();
    let map = fit_map(&data, &prior, &ParamVector::zeros(1), &SolverOptions::default()).unwrap();
    assert!(ml.theta_hat.as_slice()[0] > 0.0);
    assert!(map.theta_hat.as_slice()[0] < ml.theta_hat.as_slice()[0]);
}

#[test]
fn gaussian_features_are_identified_with_the_expected_moment() {
    let mean_eig = (0..1000u64)
        .into_par_iter()
        .map(|r| {
            let report = check_identification(&fixture(replicate_seed(9, r), 100, 10, &[1.0]), DEFAULT_RELATIVE_THRESHOLD);
            assert!(report.identified);
            report.min_eigenvalue
        })
        .sum::<f64>()
        / 1000.0;
    // Nine non-zeroed options each contribute E[x²] = 1.
    assert!((mean_eig - 9.0).abs() < 0.05, "mean min eigenvalue {mean_eig}");
}

#[test]
fn vector_fixture_recovers_each_coordinate() {
    let data = fixture(1, 200, 100, &[1.0, 2.0, 3.0]);
    let fit = fit_ml(&data, &ParamVector::zeros(3), &SolverOptions::default()).unwrap();
    assert!(fit.converged);
    let ci = confidence_intervals(&fit, 0.99).unwrap();
    assert!(ci.contains(&[1.0, 2.0, 3.0]).iter().all(|&c| c), "{ci:?}");
    let widths = ci.widths();
    assert!(widths[2] > widths[0]);
}
