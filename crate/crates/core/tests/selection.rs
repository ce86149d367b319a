use choicefit::bandit::{select_arm, selection_probabilities};
use choicefit::simulate::stream_rng;
use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson goodness-of-fit p-value of `draws` against `p`.
fn chi_square_p(counts: &[usize], p: &DVector<f64>, draws: usize) -> f64 {
    let stat: f64 = counts
        .iter()
        .zip(p.iter())
        .map(|(&c, &pi)| {
            let expected = pi * draws as f64;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn sampled_arms_follow_the_softmax_distribution() {
    let q = DVector::from_vec(vec![10.0, 10.5, 11.0, 9.0, 12.0, 10.2]);
    for (t, nu, seed) in [(5, 2.0, 1), (40, 5.0, 2), (2, 0.5, 3)] {
        let p = selection_probabilities(&q, t, nu).unwrap();
        let draws = 100_000;
        let mut rng = stream_rng(seed, 0);
        let mut counts = vec![0; q.len()];
        for _ in 0..draws {
            counts[select_arm(&q, t, nu, &mut rng).unwrap()] += 1;
        }
        let pv = chi_square_p(&counts, &p, draws);
        assert!(pv > 1e-3, "t = {t}, ν = {nu}: p = {pv:e}, counts {counts:?}");
    }
}

#[test]
fn first_decision_is_uniform() {
    let q = DVector::from_vec(vec![0.0, 100.0, -50.0, 7.0]);
    let mut rng = stream_rng(9, 0);
    let draws = 100_000;
    let mut counts = vec![0; 4];
    for _ in 0..draws {
        counts[select_arm(&q, 1, 0.1, &mut rng).unwrap()] += 1;
    }
    let uniform = DVector::from_element(4, 0.25);
    assert!(chi_square_p(&counts, &uniform, draws) > 1e-3, "{counts:?}");
}
