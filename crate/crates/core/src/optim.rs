//! Damped Newton minimization for small smooth convex objectives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    /// Gradient and Hessian at `x`.
    fn derivatives(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the infinity norm of the gradient.
    pub gradient_tolerance: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug)]
pub enum NewtonFailure {
    NotConverged {
        last: DVector<f64>,
        iterations: usize,
        gradient_norm: f64,
    },
    /// The Hessian was not positive definite at some iterate.
    IndefiniteHessian { iteration: usize },
    NonFinite { iteration: usize },
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
const ROUNDING: f64 = 1e-10;

pub fn minimize<O: SmoothObjective + ?Sized>(
    objective: &O,
    start: DVector<f64>,
    options: &NewtonOptions,
) -> Result<NewtonOutcome, NewtonFailure> {
    let mut x = start;
    let mut value = objective.value(&x);
    let mut gradient_norm = f64::INFINITY;
    for iteration in 0..=options.max_iterations {
        let (gradient, hessian) = objective.derivatives(&x);
        gradient_norm = gradient.amax();
        if !gradient_norm.is_finite() || !value.is_finite() {
            return Err(NewtonFailure::NonFinite { iteration });
        }
        if gradient_norm <= options.gradient_tolerance {
            return Ok(NewtonOutcome {
                x,
                value,
                iterations: iteration,
                gradient_norm,
            });
        }
        if iteration == options.max_iterations {
            break;
        }
        let Some(chol) = hessian.cholesky() else {
            return Err(NewtonFailure::IndefiniteHessian { iteration });
        };
        let direction = -chol.solve(&gradient);
        let slope = gradient.dot(&direction);

        // Close to the optimum the predicted decrease is below rounding in
        // the objective, so line search would only accept noise: take the
        // full Newton step. Otherwise backtrack on the Armijo condition.
        if -slope <= ROUNDING * (1.0 + value.abs()) {
            x += &direction;
            value = objective.value(&x);
            continue;
        }
        let mut step = 1.0;
        loop {
            let candidate = &x + &direction * step;
            let candidate_value = objective.value(&candidate);
            if candidate_value <= value + ARMIJO * step * slope {
                x = candidate;
                value = candidate_value;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                x += &direction;
                value = objective.value(&x);
                break;
            }
        }
    }
    Err(NewtonFailure::NotConverged {
        last: x,
        iterations: options.max_iterations,
        gradient_norm,
    })
}
