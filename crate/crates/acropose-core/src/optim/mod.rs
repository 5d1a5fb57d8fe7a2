//! Self-contained numerical optimizers and the Gaussian-mixture pose prior.
//!
//! Optimizers implement the [`Optimizer`] strategy trait and are registered
//! by name in an [`OptimizerRegistry`]; the fitting schedule selects one per
//! stage at runtime ("lbfgs", "adam").

mod adam;
mod gmm;
mod gradcheck;
mod lbfgs;

pub use adam::{adam_minimize, AdamConfig, AdamOptimizer};
pub use gmm::{gmm_fit_em, gmm_neg_log_prob, load_gmm, save_gmm, GmmFit, GmmModel};
pub use gradcheck::{finite_diff_grad, grad_check, GradCheckReport, DEFAULT_FD_EPS};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsOptimizer};

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Value and gradient of an objective at one point.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: DVector<f64>,
}

/// A differentiable objective. Optimizers call this from a single thread.
pub trait Objective {
    fn eval(&mut self, x: &DVector<f64>) -> ObjectiveEval;
}

impl<F> Objective for F
where
    F: FnMut(&DVector<f64>) -> ObjectiveEval,
{
    fn eval(&mut self, x: &DVector<f64>) -> ObjectiveEval {
        self(x)
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimization strategy, selectable by name at runtime.
pub trait Optimizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn minimize(&self, objective: &mut dyn Objective, x0: DVector<f64>) -> Result<OptimOutcome>;
}

/// Options a caller may override when building an optimizer from the registry;
/// unset fields keep the strategy's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerOptions {
    pub max_iterations: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub learning_rate: Option<f64>,
}

type OptimizerBuilder = Box<dyn Fn(&OptimizerOptions) -> Box<dyn Optimizer> + Send + Sync>;

/// Name → optimizer factory. `with_builtins` registers "lbfgs" and "adam".
pub struct OptimizerRegistry {
    builders: BTreeMap<String, OptimizerBuilder>,
}

impl OptimizerRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("lbfgs", |opts| {
            let mut config = LbfgsConfig::default();
            if let Some(n) = opts.max_iterations {
                config.max_iterations = n;
            }
            if let Some(t) = opts.gradient_tolerance {
                config.gradient_tolerance = t;
            }
            Box::new(LbfgsOptimizer::new(config))
        });
        reg.register("adam", |opts| {
            let mut config = AdamConfig::default();
            if let Some(n) = opts.max_iterations {
                config.max_iterations = n;
            }
            if let Some(t) = opts.gradient_tolerance {
                config.gradient_tolerance = t;
            }
            if let Some(lr) = opts.learning_rate {
                config.learning_rate = lr;
            }
            Box::new(AdamOptimizer::new(config))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, builder: F)
    where
        F: Fn(&OptimizerOptions) -> Box<dyn Optimizer> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Box::new(builder));
    }

    pub fn build(&self, name: &str, options: &OptimizerOptions) -> Result<Box<dyn Optimizer>> {
        match self.builders.get(name) {
            Some(b) => Ok(b(options)),
            None => Err(Error::InvalidInput(format!(
                "unknown optimizer '{name}', available: {}",
                self.names().join(", ")
            ))),
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
