//! Monotone ascent for smooth concave objectives: BFGS on the inverse Hessian
//! or exact Newton, both globalized by a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A function to be maximized.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)>;

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// BFGS with secant updates of the inverse Hessian.
    #[default]
    QuasiNewton,
    /// Newton steps from the analytic Hessian.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: Method,
    /// Stop when the max-norm of the gradient falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Sufficient-increase constant of the Armijo test.
    pub armijo: f64,
    /// Step-length contraction per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::QuasiNewton,
            tolerance: 1e-8,
            max_iterations: 500,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::invalid("Armijo constant must lie in (0, 1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid("line-search shrink factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective value after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }
}

pub fn maximize<O: Objective + ?Sized>(
    objective: &O,
    init: &DVector<f64>,
    options: &SolverOptions,
) -> Result<Solution> {
    options.validate()?;
    if init.len() != objective.dim() {
        return Err(Error::shape(format!(
            "initial point has length {}, objective expects {}",
            init.len(),
            objective.dim()
        )));
    }
    let n = init.len();
    let mut x = init.clone();
    let (mut f, mut g) = objective.value_gradient(&x)?;
    let mut trace = vec![f];
    let mut inv_hessian = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut iterations = 0;

    let termination = loop {
        if g.amax() <= options.tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= options.max_iterations {
            break Termination::MaxIterations;
        }

        let mut direction = match options.method {
            Method::QuasiNewton => &inv_hessian * &g,
            Method::Newton => newton_direction(objective, &x, &g)?,
        };
        let mut slope = g.dot(&direction);
        if !(slope > 0.0) || !slope.is_finite() {
            inv_hessian.fill_with_identity();
            scaled = false;
            direction = g.clone();
            slope = g.dot(&g);
        }

        let noise = 16.0 * f64::EPSILON * (1.0 + f.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..options.max_backtracks {
            let trial = &x + &direction * step;
            if let Ok((ft, gt)) = objective.value_gradient(&trial) {
                if ft.is_finite() {
                    let sufficient = ft >= f + options.armijo * step * slope;
                    // Near the optimum the Armijo test drowns in rounding; accept
                    // steps that keep the value within noise and shrink the gradient.
                    let within_noise = (ft - f).abs() <= noise && gt.amax() < g.amax();
                    if sufficient || within_noise {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            step *= options.shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break Termination::LineSearchFailed;
        };

        let s = &x_new - &x;
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if options.method == Method::QuasiNewton && sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                inv_hessian *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let left = DMatrix::identity(n, n) - (&s * y.transpose()) * rho;
            inv_hessian = &left * &inv_hessian * left.transpose() + (&s * s.transpose()) * rho;
        }

        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        iterations += 1;
    };

    Ok(Solution {
        x,
        value: f,
        gradient: g,
        iterations,
        termination,
        trace,
    })
}

fn newton_direction<O: Objective + ?Sized>(
    objective: &O,
    x: &DVector<f64>,
    g: &DVector<f64>,
) -> Result<DVector<f64>> {
    let neg_h = -objective.hessian(x)?;
    Ok(match neg_h.cholesky() {
        Some(chol) => chol.solve(g),
        // Flat or indefinite curvature: fall back to steepest ascent.
        None => g.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `-(x - c)ᵀ A (x - c)` with an ill-conditioned `A`.
    struct Quadratic {
        a: DMatrix<f64>,
        c: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn value_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
            let d = x - &self.c;
            let ad = &self.a * &d;
            Ok((-d.dot(&ad), -2.0 * ad))
        }
        fn hessian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(-2.0 * self.a.clone())
        }
    }

    fn quadratic() -> Quadratic {
        Quadratic {
            a: DMatrix::from_row_slice(3, 3, &[100.0, 1.0, 0.0, 1.0, 1.0, 0.2, 0.0, 0.2, 0.1]),
            c: DVector::from_vec(vec![1.0, -2.0, 30.0]),
        }
    }

    #[test]
    fn both_methods_find_the_maximizer() {
        let q = quadratic();
        for method in [Method::QuasiNewton, Method::Newton] {
            let opts = SolverOptions {
                method,
                ..Default::default()
            };
            let sol = maximize(&q, &DVector::zeros(3), &opts).unwrap();
            assert!(sol.converged(), "{method:?}: {:?}", sol.termination);
            assert!((&sol.x - &q.c).amax() < 1e-6);
        }
    }

    #[test]
    fn trace_is_monotone() {
        let sol = maximize(&quadratic(), &DVector::from_vec(vec![5.0, 5.0, 5.0]), &Default::default()).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn iteration_cap_is_respected() {
        let opts = SolverOptions {
            max_iterations: 2,
            tolerance: 1e-300,
            ..Default::default()
        };
        let sol = maximize(&quadratic(), &DVector::zeros(3), &opts).unwrap();
        assert_eq!(sol.termination, Termination::MaxIterations);
        assert_eq!(sol.iterations, 2);
    }

    #[test]
    fn rejects_bad_options_and_shapes() {
        let bad = SolverOptions {
            shrink: 1.0,
            ..Default::default()
        };
        assert!(maximize(&quadratic(), &DVector::zeros(3), &bad).is_err());
        assert!(maximize(&quadratic(), &DVector::zeros(2), &Default::default()).is_err());
    }
}
