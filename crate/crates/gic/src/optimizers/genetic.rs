use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{GicError, Result};
use crate::feasibility::FeasibleRegion;
use crate::objective::ObjectiveContext;

use super::{argmin, local_search, HeuristicParams, PerturbationSampler, SearchOutcome};

/// Candidate perturbations with their cached objective values (`None` until
/// first evaluated).
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub rows: Vec<Vec<f64>>,
    pub values: Vec<Option<f64>>,
}

impl Population {
    pub fn unevaluated(rows: Vec<Vec<f64>>) -> Self {
        let values = vec![None; rows.len()];
        Self { rows, values }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Evaluates rows without a cached value, in index order.
    pub fn evaluate(&mut self, ctx: &ObjectiveContext<'_>) -> Result<Vec<f64>> {
        for (row, value) in self.rows.iter().zip(self.values.iter_mut()) {
            if value.is_none() {
                *value = Some(ctx.eval(row)?);
            }
        }
        Ok(self.values.iter().map(|v| v.expect("evaluated")).collect())
    }

    /// Stable sort by objective, best first. Rows must be evaluated.
    pub fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let (va, vb) = (
                self.values[a].expect("evaluated"),
                self.values[b].expect("evaluated"),
            );
            va.total_cmp(&vb)
        });
        self.rows = idx.iter().map(|&i| self.rows[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }
}

/// Initial population: each row accumulates a random number (uniform on
/// `1..=|D|`) of single-feature normal steps, then is projected.
pub fn init_population(
    region: &FeasibleRegion,
    sampler: &mut PerturbationSampler,
    m: usize,
) -> Result<Population> {
    let dim = region.dim();
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let steps = sampler.rng().random_range(1..=dim);
        let mut b = vec![0.0; dim];
        for _ in 0..steps {
            let (q, step) = sampler.sample();
            b[q] += step;
        }
        rows.push(region.project(&b)?);
    }
    Ok(Population::unevaluated(rows))
}

/// Single-point crossover at 1-based point `q`: the first child keeps
/// `a[..q-1]` and takes the rest from `b`; the second is its complement.
pub fn crossover(a: &[f64], b: &[f64], q: usize) -> (Vec<f64>, Vec<f64>) {
    let cut = q - 1;
    let mut c1 = a[..cut].to_vec();
    c1.extend_from_slice(&b[cut..]);
    let mut c2 = b[..cut].to_vec();
    c2.extend_from_slice(&a[cut..]);
    (c1, c2)
}

/// Adds one single-feature normal step to `x` with probability `1 - v`.
pub fn mutate(x: &mut [f64], sampler: &mut PerturbationSampler, v: f64) {
    if v < 1.0 && sampler.rng().random_bool(1.0 - v) {
        let (q, b) = sampler.sample();
        x[q] += b;
    }
}

/// Breeds `n_children` feasible children from the (already shuffled)
/// breeding pool.
///
/// Parents are paired in pool order; when more parents are needed than the
/// pool holds, the extra indices are drawn uniformly from the pool. An odd
/// request produces one surplus child, which is dropped.
pub fn make_children(
    region: &FeasibleRegion,
    pool: &[Vec<f64>],
    n_children: usize,
    sampler: &mut PerturbationSampler,
    v: f64,
    mutation: bool,
) -> Result<Vec<Vec<f64>>> {
    if pool.is_empty() {
        return Err(GicError::InvalidSpec("breeding pool is empty".into()));
    }
    let pairs = n_children.div_ceil(2);
    let needed = 2 * pairs;
    let mut parents: Vec<usize> = (0..needed.min(pool.len())).collect();
    while parents.len() < needed {
        parents.push(sampler.rng().random_range(0..pool.len()));
    }

    let dim = region.dim();
    let mut children = Vec::with_capacity(needed);
    for k in 0..pairs {
        let q = sampler.rng().random_range(1..=dim);
        let (mut c1, mut c2) = crossover(&pool[parents[2 * k]], &pool[parents[2 * k + 1]], q);
        if mutation {
            mutate(&mut c1, sampler, v);
            mutate(&mut c2, sampler, v);
        }
        children.push(region.project(&c1)?);
        children.push(region.project(&c2)?);
    }
    children.truncate(n_children);
    Ok(children)
}

/// Roulette-wheel probabilities from inverted fitness `omega - g`.
///
/// Falls back to uniform when every candidate sits at the worst case.
pub fn selection_probabilities(values: &[f64], omega: f64) -> Result<Vec<f64>> {
    if let Some(g) = values.iter().find(|&&g| g > omega) {
        return Err(GicError::InvalidSpec(format!(
            "omega {omega} is below objective value {g}"
        )));
    }
    let inverted: Vec<f64> = values.iter().map(|g| omega - g).collect();
    let total: f64 = inverted.iter().sum();
    if total <= 0.0 {
        warn!("all carryover candidates at worst case; selecting uniformly");
        let n = values.len() as f64;
        return Ok(vec![1.0 / n; values.len()]);
    }
    Ok(inverted.into_iter().map(|l| l / total).collect())
}

/// Draws `count` row indices independently, with replacement, according to
/// the selection probabilities of `values`.
pub fn select_carryover<R: Rng>(
    values: &[f64],
    count: usize,
    omega: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let probs = selection_probabilities(values, omega)?;
    let mut picks = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = j;
                break;
            }
        }
        picks.push(chosen);
    }
    Ok(picks)
}

/// Genetic algorithm with mutation.
pub fn ga(
    ctx: &ObjectiveContext<'_>,
    sampler: &mut PerturbationSampler,
    params: &HeuristicParams,
) -> Result<SearchOutcome> {
    evolve(ctx, sampler, params, None)
}

/// Genetic algorithm whose children skip mutation and are instead refined by
/// a local search with sample size `xi`.
pub fn ga_ls(
    ctx: &ObjectiveContext<'_>,
    sampler: &mut PerturbationSampler,
    params: &HeuristicParams,
) -> Result<SearchOutcome> {
    evolve(ctx, sampler, params, Some(params.xi))
}

fn evolve(
    ctx: &ObjectiveContext<'_>,
    sampler: &mut PerturbationSampler,
    params: &HeuristicParams,
    local_extent: Option<usize>,
) -> Result<SearchOutcome> {
    params.validate()?;
    if params.alpha.is_some() {
        log::debug!("alpha is accepted but unused by the genetic searches");
    }
    let omega = params.omega.unwrap_or_else(|| ctx.omega());
    let region = ctx.region();
    let zero = vec![0.0; ctx.dim()];
    let initial = ctx.eval(&zero)?;
    let (mut best_z, mut best_g) = (zero, initial);

    let n_children = params.n_children();
    let n_carry = params.n_carryover();
    let n_breed = params.n_breeding();

    let mut pop = Population::unevaluated(Vec::new());
    for iter in 0..params.max_iters {
        if iter == 0 {
            pop = init_population(region, sampler, params.m)?;
        }
        let values = pop.evaluate(ctx)?;
        if let Some(j) = argmin(&values) {
            if values[j] < best_g {
                best_g = values[j];
                best_z = pop.rows[j].clone();
            }
        }
        pop.order();

        let mut pool: Vec<Vec<f64>> = pop.rows[..n_breed].to_vec();
        pool.shuffle(sampler.rng());

        let mut next = match local_extent {
            None => {
                let children = make_children(region, &pool, n_children, sampler, params.v, true)?;
                Population::unevaluated(children)
            }
            Some(xi) => {
                let children = make_children(region, &pool, n_children, sampler, params.v, false)?;
                let mut refined = Population::unevaluated(Vec::with_capacity(n_children));
                for child in children {
                    let g = ctx.eval(&child)?;
                    let (z, g) = local_search(&child, g, ctx, sampler, xi)?;
                    refined.rows.push(z);
                    refined.values.push(Some(g));
                }
                refined
            }
        };

        let ordered: Vec<f64> = pop.values.iter().map(|v| v.expect("evaluated")).collect();
        for j in select_carryover(&ordered, n_carry, omega, sampler.rng())? {
            next.rows.push(pop.rows[j].clone());
            next.values.push(pop.values[j]);
        }
        pop = next;
    }

    Ok(SearchOutcome::new(ctx, best_z, best_g, initial))
}
