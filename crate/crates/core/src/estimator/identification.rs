use nalgebra::DMatrix;

use crate::model::ChoiceDataset;

/// Default relative eigenvalue threshold: `min_eig > 1e-8 · trace / n_obj`.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-8;

/// Sample second-moment diagnostic for identification.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationReport {
    /// `(1/n) Σ_k X^k X^kᵀ` where `X^k` holds the first `m − 1` option rows
    /// of observation `k` as columns and a zero last column.
    pub second_moment: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// Absolute threshold the minimum eigenvalue was compared against.
    pub threshold: f64,
    pub identified: bool,
    /// `⌈n_obj / m⌉`, the fewest observations that can make the matrix full rank.
    pub n_lower_bound: usize,
    pub meets_lower_bound: bool,
}

pub fn check_identification(data: &ChoiceDataset, relative_threshold: f64) -> IdentificationReport {
    let n_obj = data.features();
    let m = data.options();
    let mut second_moment = DMatrix::zeros(n_obj, n_obj);
    for obs in data.observations() {
        let x = obs.features();
        // X Xᵀ sums the outer products of every option row but the last.
        let head = x.rows(0, m - 1);
        second_moment += head.transpose() * head;
    }
    second_moment /= data.len() as f64;
    let second_moment = (&second_moment + second_moment.transpose()) * 0.5;

    let min_eigenvalue = second_moment
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let threshold = relative_threshold * second_moment.trace() / n_obj as f64;
    let n_lower_bound = n_obj.div_ceil(m);
    IdentificationReport {
        identified: min_eigenvalue > threshold,
        meets_lower_bound: data.len() >= n_lower_bound,
        second_moment,
        min_eigenvalue,
        threshold,
        n_lower_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;

    fn dataset(m: usize, n_obj: usize, n: usize, fill: impl Fn(usize, usize, usize) -> f64) -> ChoiceDataset {
        let obs = (0..n)
            .map(|k| Observation::new(DMatrix::from_fn(m, n_obj, |i, j| fill(k, i, j)), 0).unwrap())
            .collect();
        ChoiceDataset::new(obs).unwrap()
    }

    #[test]
    fn all_zero_features_are_not_identified() {
        let r = check_identification(&dataset(4, 2, 10, |_, _, _| 0.0), DEFAULT_RELATIVE_THRESHOLD);
        assert_eq!(r.min_eigenvalue, 0.0);
        assert!(!r.identified);
    }

    #[test]
    fn last_option_is_zeroed() {
        // Only the last option varies: X^k drops it, so the moment matrix is zero.
        let r = check_identification(
            &dataset(3, 1, 5, |k, i, _| if i == 2 { k as f64 + 1.0 } else { 0.0 }),
            DEFAULT_RELATIVE_THRESHOLD,
        );
        assert!(!r.identified);
    }

    #[test]
    fn moment_matrix_by_hand() {
        // One observation, rows [1, 2], [3, 4], [5, 6]: X Xᵀ = [1,2]ᵀ[1,2] + [3,4]ᵀ[3,4].
        let rows = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let r = check_identification(&dataset(3, 2, 1, |_, i, j| rows[i][j]), DEFAULT_RELATIVE_THRESHOLD);
        assert_eq!(r.second_moment, DMatrix::from_row_slice(2, 2, &[10.0, 14.0, 14.0, 20.0]));
        assert!(r.identified);
    }

    #[test]
    fn lower_bound_is_a_ceiling() {
        let cases = [(3, 100, 1), (1, 2, 1), (2, 2, 1), (3, 2, 2), (4, 2, 2), (5, 2, 3), (10, 3, 4), (9, 3, 3), (7, 7, 1), (8, 7, 2)];
        for (n_obj, m, expected) in cases {
            let r = check_identification(&dataset(m, n_obj, 1, |_, i, j| (i * n_obj + j) as f64), 1e-8);
            assert_eq!(r.n_lower_bound, expected, "n_obj = {n_obj}, m = {m}");
        }
    }
}
