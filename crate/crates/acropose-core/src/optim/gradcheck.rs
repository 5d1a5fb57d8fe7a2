//! Finite-difference gradients and analytic-gradient verification.

use nalgebra::DVector;

use super::Objective;

/// Default central-difference step.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    eps: f64,
) -> DVector<f64> {
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let fp = f(&probe);
        probe[i] = x[i] - eps;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Component where the worst disagreement occurred.
    pub worst_component: usize,
    pub pass: bool,
}

/// Compare the objective's analytic gradient against central differences.
///
/// The per-component relative error uses `max(|analytic|, |fd|, 1e-8)` as
/// denominator.
pub fn grad_check(
    objective: &mut dyn Objective,
    x: &DVector<f64>,
    eps: f64,
    rel_tol: f64,
) -> GradCheckReport {
    let analytic = objective.eval(x).gradient;
    let mut value_only = |p: &DVector<f64>| objective.eval(p).value;
    let fd = finite_diff_grad(&mut value_only, x, eps);
    let mut max_rel = 0.0;
    let mut worst = 0;
    for i in 0..x.len() {
        let denom = analytic[i].abs().max(fd[i].abs()).max(1e-8);
        let rel = (analytic[i] - fd[i]).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    GradCheckReport {
        max_relative_error: max_rel,
        worst_component: worst,
        pass: max_rel <= rel_tol,
    }
}
