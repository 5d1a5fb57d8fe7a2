//! Adam with bias correction, used for the translation/orientation
//! refinement stage.

use nalgebra::DVector;

use super::{Objective, OptimOutcome, Optimizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 2000,
            gradient_tolerance: 1e-8,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidInput("adam learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub struct AdamOptimizer {
    config: AdamConfig,
}

impl AdamOptimizer {
    pub fn new(config: AdamConfig) -> Self {
        Self { config }
    }
}

impl Optimizer for AdamOptimizer {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn minimize(&self, objective: &mut dyn Objective, x0: DVector<f64>) -> Result<OptimOutcome> {
        adam_minimize(objective, x0, &self.config)
    }
}

pub fn adam_minimize(
    objective: &mut dyn Objective,
    x0: DVector<f64>,
    config: &AdamConfig,
) -> Result<OptimOutcome> {
    config.validate()?;
    let n = x0.len();
    let mut x = x0;
    let mut m = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);

    let mut evals = 0usize;
    let first = objective.eval(&x);
    evals += 1;
    if !first.value.is_finite() {
        return Err(Error::Numerical("objective not finite at the start point".into()));
    }
    let mut value = first.value;
    let mut gradient = first.gradient;
    let mut best_x = x.clone();
    let mut best_value = value;
    let mut converged = gradient.norm() < config.gradient_tolerance;
    let mut iterations = 0usize;
    let mut nonfinite = 0usize;

    while !converged && iterations < config.max_iterations {
        let t = (iterations + 1) as i32;
        for i in 0..n {
            let g = gradient[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m[i] / (1.0 - config.beta1.powi(t));
            let v_hat = v[i] / (1.0 - config.beta2.powi(t));
            x[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
        let eval = objective.eval(&x);
        evals += 1;
        if !eval.value.is_finite() {
            nonfinite += 1;
            if nonfinite > 30 {
                return Err(Error::Numerical("adam: objective persistently non-finite".into()));
            }
            // Retreat halfway toward the best point seen and reset momentum.
            x = (&x + &best_x) * 0.5;
            m.fill(0.0);
            v.fill(0.0);
            let retry = objective.eval(&x);
            evals += 1;
            value = retry.value;
            gradient = retry.gradient;
            iterations += 1;
            continue;
        }
        value = eval.value;
        gradient = eval.gradient;
        if value < best_value {
            best_value = value;
            best_x.copy_from(&x);
        }
        iterations += 1;
        converged = gradient.norm() < config.gradient_tolerance;
    }

    // Adam is not monotone; report the best iterate.
    if best_value < value {
        x = best_x;
        value = best_value;
    }
    Ok(OptimOutcome {
        x,
        value,
        iterations,
        evaluations: evals,
        converged,
    })
}
