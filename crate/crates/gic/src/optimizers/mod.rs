//! Heuristic searches over the feasible perturbation set: best-improvement
//! local search, hill climbing built on it, a real-valued genetic algorithm,
//! and the genetic algorithm with local search applied to every child.
//!
//! All searches work on perturbations `z = x_D - x_bar_D`; the incumbent
//! starts at `z = 0` and only moves on strict improvement, so no search ever
//! returns something worse than the unperturbed instance.

mod genetic;
mod local;
mod sampler;

pub use genetic::{
    crossover, ga, ga_ls, init_population, make_children, mutate, select_carryover,
    selection_probabilities, Population,
};
pub use local::{hill_climb, local_search};
pub use sampler::PerturbationSampler;

use serde::{Deserialize, Serialize};

use crate::error::{GicError, Result};
use crate::objective::ObjectiveContext;

/// Tunables shared by the heuristic searches.
///
/// `v` is the probability that the mutation gate stays closed: a child is
/// mutated with probability `1 - v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicParams {
    pub m: usize,
    pub max_iters: usize,
    pub beta: f64,
    pub gamma: f64,
    pub v: f64,
    /// Worst-case objective value; `None` uses the classifier's.
    pub omega: Option<f64>,
    pub xi: usize,
    /// Accepted for configuration compatibility; no search reads it.
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            m: 15,
            max_iters: 300,
            beta: 0.40,
            gamma: 0.10,
            v: 0.5,
            omega: None,
            xi: 6,
            alpha: None,
            seed: 0,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GicError::InvalidSpec(msg));
        if self.m < 2 {
            return bad(format!(
                "population size m must be at least 2, got {}",
                self.m
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.v) {
            return bad(format!("v must lie in [0, 1], got {}", self.v));
        }
        if let Some(w) = self.omega {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("omega must be positive, got {w}"));
            }
        }
        Ok(())
    }

    /// Children per generation, `ceil(m (1 - gamma))`.
    pub fn n_children(&self) -> usize {
        ceil_count(self.m as f64 * (1.0 - self.gamma)).clamp(1, self.m)
    }

    /// Carried-over rows per generation; tops the population back up to `m`.
    pub fn n_carryover(&self) -> usize {
        self.m - self.n_children()
    }

    /// Breeding pool size, `ceil(m beta)`.
    pub fn n_breeding(&self) -> usize {
        ceil_count(self.m as f64 * self.beta).clamp(1, self.m)
    }
}

/// Ceiling that ignores representation error, so `15 * 0.4` is 6, not 7.
pub(crate) fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Result of one search from one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Best perturbation found.
    pub z: Vec<f64>,
    /// Recommended direct feature values, `x_bar_D + z`.
    pub x_d: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: u64,
}

impl SearchOutcome {
    pub(crate) fn new(
        ctx: &ObjectiveContext<'_>,
        z: Vec<f64>,
        objective: f64,
        initial: f64,
    ) -> Self {
        let x_d = ctx.x_bar_d().iter().zip(&z).map(|(a, b)| a + b).collect();
        Self {
            z,
            x_d,
            objective,
            initial_objective: initial,
            evaluations: ctx.evaluations(),
        }
    }
}

#[inline]
pub(crate) fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}
