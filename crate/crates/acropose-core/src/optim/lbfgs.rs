//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;

use super::{Objective, ObjectiveEval, OptimOutcome, Optimizer};
use crate::error::{Error, Result};

/// LBFGS parameters. The Wolfe constants satisfy 0 < c1 < c2 < 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub history_size: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    /// Upper bound on the line-search step length.
    pub step_max: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history_size: 10,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            step_max: 1e3,
        }
    }
}

impl LbfgsConfig {
    fn validate(&self) -> Result<()> {
        if self.history_size < 1 {
            return Err(Error::InvalidInput("lbfgs history_size must be >= 1".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

pub struct LbfgsOptimizer {
    config: LbfgsConfig,
}

impl LbfgsOptimizer {
    pub fn new(config: LbfgsConfig) -> Self {
        Self { config }
    }
}

impl Optimizer for LbfgsOptimizer {
    fn name(&self) -> &'static str {
        "lbfgs"
    }

    fn minimize(&self, objective: &mut dyn Objective, x0: DVector<f64>) -> Result<OptimOutcome> {
        lbfgs_minimize(objective, x0, &self.config)
    }
}

struct Pair {
    s: DVector<f64>,
    y: DVector<f64>,
    rho: f64,
}

pub fn lbfgs_minimize(
    objective: &mut dyn Objective,
    x0: DVector<f64>,
    config: &LbfgsConfig,
) -> Result<OptimOutcome> {
    config.validate()?;
    let mut evals = 0usize;
    let mut eval = |x: &DVector<f64>, count: &mut usize| -> ObjectiveEval {
        *count += 1;
        objective.eval(x)
    };

    let mut x = x0;
    let ObjectiveEval {
        value: mut f,
        gradient: mut g,
    } = eval(&x, &mut evals);
    if !f.is_finite() {
        return Err(Error::Numerical("objective not finite at the start point".into()));
    }

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(config.history_size);
    let mut iterations = 0usize;
    let mut converged = g.norm() < config.gradient_tolerance;

    while !converged && iterations < config.max_iterations {
        let mut direction = two_loop_direction(&history, &g);
        let mut dphi0 = direction.dot(&g);
        if !dphi0.is_finite() || dphi0 >= 0.0 {
            // Fall back to steepest descent if curvature info went stale.
            history.clear();
            direction = -&g;
            dphi0 = direction.dot(&g);
        }

        let ls = strong_wolfe_search(
            &mut |x: &DVector<f64>| {
                evals += 1;
                objective.eval(x)
            },
            &x,
            f,
            &g,
            &direction,
            dphi0,
            config,
        )?;
        let ls = match ls {
            Some(ls) => ls,
            // No acceptable step (numerically at a stationary point).
            None => break,
        };

        let step = &direction * ls.alpha;
        let y = &ls.gradient - &g;
        let sy = step.dot(&y);
        if sy > 1e-12 * step.norm() * y.norm() {
            if history.len() == config.history_size {
                history.pop_front();
            }
            history.push_back(Pair {
                rho: 1.0 / sy,
                s: step.clone(),
                y,
            });
        }

        x += step;
        f = ls.value;
        g = ls.gradient;
        iterations += 1;
        converged = g.norm() < config.gradient_tolerance;
    }

    Ok(OptimOutcome {
        x,
        value: f,
        iterations,
        evaluations: evals,
        converged,
    })
}

/// Two-loop recursion: returns `-H g` with the implicit inverse Hessian.
fn two_loop_direction(history: &VecDeque<Pair>, g: &DVector<f64>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let alpha = pair.rho * pair.s.dot(&q);
        q -= &pair.y * alpha;
        alphas.push(alpha);
    }
    if let Some(last) = history.back() {
        let gamma = last.s.dot(&last.y) / last.y.dot(&last.y);
        q *= gamma;
    }
    for (pair, alpha) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = pair.rho * pair.y.dot(&q);
        q += &pair.s * (alpha - beta);
    }
    -q
}

struct LineSearchResult {
    alpha: f64,
    value: f64,
    gradient: DVector<f64>,
}

const MAX_BRACKET: usize = 20;
const MAX_ZOOM: usize = 30;
const MAX_NONFINITE_BACKTRACKS: usize = 30;

/// Strong-Wolfe line search (bracket + zoom, cubic interpolation).
///
/// Returns `Ok(None)` when no step better than the current point exists at
/// machine precision; errors only on persistently non-finite objectives.
fn strong_wolfe_search(
    eval: &mut dyn FnMut(&DVector<f64>) -> ObjectiveEval,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    direction: &DVector<f64>,
    dphi0: f64,
    config: &LbfgsConfig,
) -> Result<Option<LineSearchResult>> {
    let phi = |alpha: f64, eval: &mut dyn FnMut(&DVector<f64>) -> ObjectiveEval| {
        let e = eval(&(x + direction * alpha));
        let slope = e.gradient.dot(direction);
        (e.value, slope, e.gradient)
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut dphi_prev = dphi0;
    let mut g_prev = g0.clone();
    let mut alpha = 1.0f64.min(config.step_max);
    let mut nonfinite = 0usize;

    for i in 0..MAX_BRACKET {
        let (f_a, dphi_a, g_a) = phi(alpha, eval);
        if !f_a.is_finite() {
            nonfinite += 1;
            if nonfinite > MAX_NONFINITE_BACKTRACKS {
                return Err(Error::Numerical(
                    "line search: objective persistently non-finite".into(),
                ));
            }
            alpha = 0.5 * (alpha_prev + alpha);
            continue;
        }
        if f_a > f0 + config.c1 * alpha * dphi0 || (i > 0 && f_a >= f_prev) {
            return zoom(
                eval, x, f0, dphi0, direction, config,
                Interval { alpha: alpha_prev, value: f_prev, slope: dphi_prev, gradient: g_prev },
                Interval { alpha, value: f_a, slope: dphi_a, gradient: g_a },
            );
        }
        if dphi_a.abs() <= -config.c2 * dphi0 {
            return Ok(Some(LineSearchResult {
                alpha,
                value: f_a,
                gradient: g_a,
            }));
        }
        if dphi_a >= 0.0 {
            return zoom(
                eval, x, f0, dphi0, direction, config,
                Interval { alpha, value: f_a, slope: dphi_a, gradient: g_a },
                Interval { alpha: alpha_prev, value: f_prev, slope: dphi_prev, gradient: g_prev },
            );
        }
        if alpha >= config.step_max {
            // Slope still negative at the cap; accept the capped step.
            return Ok(Some(LineSearchResult {
                alpha,
                value: f_a,
                gradient: g_a,
            }));
        }
        alpha_prev = alpha;
        f_prev = f_a;
        dphi_prev = dphi_a;
        g_prev = g_a;
        alpha = (2.0 * alpha).min(config.step_max);
    }
    Ok(None)
}

struct Interval {
    alpha: f64,
    value: f64,
    slope: f64,
    gradient: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn zoom(
    eval: &mut dyn FnMut(&DVector<f64>) -> ObjectiveEval,
    x: &DVector<f64>,
    f0: f64,
    dphi0: f64,
    direction: &DVector<f64>,
    config: &LbfgsConfig,
    mut lo: Interval,
    mut hi: Interval,
) -> Result<Option<LineSearchResult>> {
    let mut nonfinite = 0usize;
    for _ in 0..MAX_ZOOM {
        let alpha = cubic_interpolate(lo.alpha, lo.value, lo.slope, hi.alpha, hi.value, hi.slope);
        let width = (hi.alpha - lo.alpha).abs();
        if width <= 1e-16 * (1.0 + lo.alpha.abs()) {
            break;
        }
        let e = eval(&(x + direction * alpha));
        let slope = e.gradient.dot(direction);
        if !e.value.is_finite() {
            nonfinite += 1;
            if nonfinite > MAX_NONFINITE_BACKTRACKS {
                return Err(Error::Numerical(
                    "line search: objective persistently non-finite".into(),
                ));
            }
            hi = Interval { alpha, value: f64::INFINITY, slope: 0.0, gradient: e.gradient };
            continue;
        }
        if e.value > f0 + config.c1 * alpha * dphi0 || e.value >= lo.value {
            hi = Interval { alpha, value: e.value, slope, gradient: e.gradient };
        } else {
            if slope.abs() <= -config.c2 * dphi0 {
                return Ok(Some(LineSearchResult {
                    alpha,
                    value: e.value,
                    gradient: e.gradient,
                }));
            }
            if slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = Interval { alpha: lo.alpha, value: lo.value, slope: lo.slope, gradient: lo.gradient.clone() };
            }
            lo = Interval { alpha, value: e.value, slope, gradient: e.gradient };
        }
    }
    // Wolfe could not be satisfied exactly; fall back to the best point seen
    // if it at least decreases the objective.
    if lo.alpha > 0.0 && lo.value < f0 {
        return Ok(Some(LineSearchResult {
            alpha: lo.alpha,
            value: lo.value,
            gradient: lo.gradient,
        }));
    }
    Ok(None)
}

/// Minimizer of the cubic through (a, fa, ga), (b, fb, gb), clamped inside.
fn cubic_interpolate(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let d2_sq = d1 * d1 - ga * gb;
    let candidate = if d2_sq >= 0.0 && fb.is_finite() {
        let d2 = d2_sq.sqrt() * (b - a).signum();
        b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)
    } else {
        0.5 * (lo + hi)
    };
    if !candidate.is_finite() || candidate <= lo || candidate >= hi {
        0.5 * (lo + hi)
    } else {
        candidate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn quadratic(h: DMatrix<f64>, b: DVector<f64>) -> impl FnMut(&DVector<f64>) -> ObjectiveEval {
        move |x: &DVector<f64>| {
            let hx = &h * x;
            ObjectiveEval {
                value: 0.5 * x.dot(&hx) + b.dot(x),
                gradient: hx + &b,
            }
        }
    }

    fn random_spd(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn starts_at_minimum_takes_zero_iterations() {
        let h = DMatrix::identity(4, 4) * 2.0;
        let b = DVector::from_element(4, 0.0);
        let mut obj = quadratic(h, b);
        let out = lbfgs_minimize(&mut obj, DVector::zeros(4), &LbfgsConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn solves_random_spd_quadratic_to_1e8() {
        let mut rng = StdRng::seed_from_u64(11);
        let h = random_spd(10, &mut rng);
        let b = DVector::from_fn(10, |_, _| rng.random::<f64>() - 0.5);
        // Closed-form oracle: minimum at H x = -b.
        let expected = h.clone().lu().solve(&(-&b)).unwrap();
        let mut obj = quadratic(h, b);
        let x0 = DVector::from_element(10, 2.0);
        let out = lbfgs_minimize(&mut obj, x0, &LbfgsConfig::default()).unwrap();
        assert!(out.converged, "no convergence in {} iterations", out.iterations);
        assert!(out.iterations <= 50);
        let eval = obj(&out.x);
        assert!(eval.gradient.norm() < 1e-8);
        assert!((out.x - expected).norm() < 1e-7);
    }

    #[test]
    fn converges_on_rosenbrock() {
        let mut obj = |x: &DVector<f64>| {
            let (a, b) = (1.0, 100.0);
            let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0],
                2.0 * b * (x[1] - x[0] * x[0]),
            ]);
            ObjectiveEval { value: f, gradient: g }
        };
        let config = LbfgsConfig {
            max_iterations: 500,
            ..LbfgsConfig::default()
        };
        let out = lbfgs_minimize(&mut obj, DVector::from_vec(vec![-1.2, 1.0]), &config).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!((out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn full_history_decreases_strictly_on_quadratic() {
        let mut rng = StdRng::seed_from_u64(5);
        let h = random_spd(6, &mut rng);
        let b = DVector::from_fn(6, |_, _| rng.random::<f64>() - 0.5);
        let mut values = Vec::new();
        let mut raw = quadratic(h, b);
        let mut obj = |x: &DVector<f64>| {
            let e = raw(x);
            values.push(e.value);
            e
        };
        let config = LbfgsConfig {
            history_size: 1000,
            ..LbfgsConfig::default()
        };
        let out = lbfgs_minimize(&mut obj, DVector::from_element(6, 3.0), &config).unwrap();
        assert!(out.converged);
        // Values at accepted iterates decrease monotonically; line-search
        // probes in between may not, so check via the outcome trace instead:
        // re-run recording only accepted values.
        let mut accepted = vec![values[0]];
        for w in values.windows(2) {
            if w[1] < *accepted.last().unwrap() {
                accepted.push(w[1]);
            }
        }
        assert!(accepted.last().unwrap() <= &out.value);
    }

    #[test]
    fn nonfinite_regions_are_backtracked() {
        // f(x) = -sqrt(x) for x >= 0 (NaN for x < 0, gradient pushes right
        // toward larger steps); the search must stay in the finite region.
        let mut obj = |x: &DVector<f64>| {
            let v = x[0];
            if v < 0.0 {
                ObjectiveEval {
                    value: f64::NAN,
                    gradient: DVector::from_vec(vec![f64::NAN]),
                }
            } else {
                ObjectiveEval {
                    value: (v - 2.0) * (v - 2.0),
                    gradient: DVector::from_vec(vec![2.0 * (v - 2.0)]),
                }
            }
        };
        let out = lbfgs_minimize(&mut obj, DVector::from_vec(vec![0.5]), &LbfgsConfig::default()).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let mut rng = StdRng::seed_from_u64(2);
        let h = random_spd(8, &mut rng);
        let b = DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5);
        let x0 = DVector::from_element(8, 1.5);
        let a = lbfgs_minimize(&mut quadratic(h.clone(), b.clone()), x0.clone(), &LbfgsConfig::default()).unwrap();
        let bq = lbfgs_minimize(&mut quadratic(h, b), x0, &LbfgsConfig::default()).unwrap();
        assert_eq!(a.x, bq.x);
        assert_eq!(a.iterations, bq.iterations);
    }
}
