use crate::error::Result;
use crate::objective::ObjectiveContext;

use super::{argmin, HeuristicParams, PerturbationSampler, SearchOutcome};

/// One best-improvement step from `z` (whose objective is `g_z`).
///
/// Draws `m` single-feature steps, each taken from the current point and
/// projected back into the feasible set, evaluates all of them, and moves to
/// the best one only if it strictly beats `g_z`. Costs exactly `m`
/// evaluations.
pub fn local_search(
    z: &[f64],
    g_z: f64,
    ctx: &ObjectiveContext<'_>,
    sampler: &mut PerturbationSampler,
    m: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut candidates = Vec::with_capacity(m);
    for _ in 0..m {
        let (q, b) = sampler.sample();
        let mut w = z.to_vec();
        w[q] += b;
        candidates.push(ctx.region().project(&w)?);
    }
    let values = candidates
        .iter()
        .map(|c| ctx.eval(c))
        .collect::<Result<Vec<f64>>>()?;
    match argmin(&values) {
        Some(best) if values[best] < g_z => Ok((candidates.swap_remove(best), values[best])),
        _ => Ok((z.to_vec(), g_z)),
    }
}

/// Hill climbing: `max_iters` rounds of [`local_search`] with sample size `m`,
/// starting from the unperturbed instance.
pub fn hill_climb(
    ctx: &ObjectiveContext<'_>,
    sampler: &mut PerturbationSampler,
    params: &HeuristicParams,
) -> Result<SearchOutcome> {
    let zero = vec![0.0; ctx.dim()];
    let initial = ctx.eval(&zero)?;
    let (mut z, mut g) = (zero, initial);
    for _ in 0..params.max_iters {
        (z, g) = local_search(&z, g, ctx, sampler, params.m)?;
    }
    Ok(SearchOutcome::new(ctx, z, g, initial))
}
