//! Sensitivity-analysis baselines: move one feature at a time as far as the
//! bounds and remaining budget allow, accepting either the best such move
//! (`lvp_bi`) or the first improving one in random feature order (`lvp_fi`).

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::feasibility::{CostKind, FeasibleRegion};
use crate::objective::ObjectiveContext;
use crate::optimizers::SearchOutcome;

/// Moves shorter than this are treated as saturated.
const MIN_STEP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepDirection {
    Increase,
    Decrease,
}

/// Length of the longest move of feature `i` in direction `dir` from `z` that
/// keeps both the bounds and the budget. Returns 0 when saturated and
/// infinity when neither bound nor budget limits the move.
pub fn max_feasible_step(i: usize, dir: StepDirection, z: &[f64], region: &FeasibleRegion) -> f64 {
    let costs = &region.costs;
    let current = z[i];
    let spent = region.cost(z);
    // Largest cost feature i may carry once the move is done.
    let allowance = (region.budget - spent).max(0.0) + costs.term(i, current);

    let (price, limit) = match dir {
        StepDirection::Increase => (costs.increase[i], region.bounds.upper[i]),
        StepDirection::Decrease => (costs.decrease[i], -region.bounds.lower[i]),
    };
    // Work in the direction of travel: `s` is the signed position along it.
    let s = match dir {
        StepDirection::Increase => current,
        StepDirection::Decrease => -current,
    };
    let reach = if price == 0.0 {
        f64::INFINITY
    } else {
        match costs.kind {
            CostKind::Linear => allowance / price,
            CostKind::Quadratic => (allowance / price).sqrt(),
        }
    };
    let target = reach.min(limit);
    if target.is_infinite() {
        return f64::INFINITY;
    }
    let step = target - s;
    if step > MIN_STEP {
        step
    } else {
        0.0
    }
}

/// Moves feature `i` of `z` by `step` in direction `dir`.
pub fn apply_step(
    i: usize,
    dir: StepDirection,
    step: f64,
    z: &[f64],
    region: &FeasibleRegion,
) -> Vec<f64> {
    let mut next = z.to_vec();
    next[i] += match dir {
        StepDirection::Increase => step,
        StepDirection::Decrease => -step,
    };
    // Pin to the box against rounding.
    next[i] = next[i].clamp(region.bounds.lower[i], region.bounds.upper[i]);
    next
}

/// Every saturating single-feature move available from `z`, as the moved
/// perturbation.
fn candidate_moves(z: &[f64], region: &FeasibleRegion, features: &[usize]) -> Vec<Vec<f64>> {
    let mut moves = Vec::new();
    for &i in features {
        for dir in [StepDirection::Increase, StepDirection::Decrease] {
            let step = max_feasible_step(i, dir, z, region);
            if step == 0.0 {
                continue;
            }
            if step.is_infinite() {
                log::warn!("feature {i} is unbounded and free in direction {dir:?}; skipping");
                continue;
            }
            moves.push(apply_step(i, dir, step, z, region));
        }
    }
    moves
}

fn move_cap(ctx: &ObjectiveContext<'_>) -> usize {
    10 * ctx.dim()
}

/// Best-improvement variant: evaluate every feature's saturating move, take
/// the best if it strictly improves, repeat.
pub fn lvp_bi(ctx: &ObjectiveContext<'_>) -> Result<SearchOutcome> {
    let region = ctx.region();
    let features: Vec<usize> = (0..ctx.dim()).collect();
    let mut z = vec![0.0; ctx.dim()];
    let initial = ctx.eval(&z)?;
    let mut g = initial;
    for _ in 0..move_cap(ctx) {
        let moves = candidate_moves(&z, region, &features);
        let mut best: Option<(usize, f64)> = None;
        for (k, mv) in moves.iter().enumerate() {
            let v = ctx.eval(mv)?;
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((k, v));
            }
        }
        match best {
            Some((k, v)) if v < g => {
                z = moves[k].clone();
                g = v;
            }
            _ => break,
        }
    }
    Ok(SearchOutcome::new(ctx, z, g, initial))
}

/// First-improvement variant: scan features in a fresh random order each
/// pass and accept the first saturating move that strictly improves.
pub fn lvp_fi<R: Rng>(ctx: &ObjectiveContext<'_>, rng: &mut R) -> Result<SearchOutcome> {
    lvp_fi_with(ctx, |order| order.shuffle(rng))
}

/// [`lvp_fi`] with the scan order of each pass chosen by `reorder`, which
/// receives the previous order.
pub fn lvp_fi_with<F: FnMut(&mut Vec<usize>)>(
    ctx: &ObjectiveContext<'_>,
    mut reorder: F,
) -> Result<SearchOutcome> {
    let region = ctx.region();
    let mut z = vec![0.0; ctx.dim()];
    let initial = ctx.eval(&z)?;
    let mut g = initial;
    let mut order: Vec<usize> = (0..ctx.dim()).collect();
    'passes: for _ in 0..move_cap(ctx) {
        reorder(&mut order);
        for &i in &order {
            for mv in candidate_moves(&z, region, &[i]) {
                let v = ctx.eval(&mv)?;
                if v < g {
                    z = mv;
                    g = v;
                    continue 'passes;
                }
            }
        }
        break;
    }
    Ok(SearchOutcome::new(ctx, z, g, initial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{CostSpec, ShiftedBounds};

    fn region(kind: CostKind, up: f64, upper: f64, budget: f64) -> FeasibleRegion {
        FeasibleRegion::new(
            CostSpec::new(vec![up], vec![1.0], kind).unwrap(),
            ShiftedBounds::new(vec![-10.0], vec![upper]).unwrap(),
            budget,
            1e-8,
        )
        .unwrap()
    }

    #[test]
    fn linear_step_matches_budget_over_cost() {
        let r = region(CostKind::Linear, 2.0, 5.0, 4.0);
        assert_eq!(
            max_feasible_step(0, StepDirection::Increase, &[0.0], &r),
            2.0
        );
    }

    #[test]
    fn quadratic_step_is_root() {
        let r = region(CostKind::Quadratic, 1.0, 5.0, 4.0);
        let step = max_feasible_step(0, StepDirection::Increase, &[0.0], &r);
        assert_eq!(step, 2.0);
        assert!((r.cost(&[step]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bound_caps_step() {
        let r = region(CostKind::Quadratic, 1.0, 1.5, 4.0);
        assert_eq!(
            max_feasible_step(0, StepDirection::Increase, &[0.0], &r),
            1.5
        );
    }

    #[test]
    fn exhausted_budget_gives_zero() {
        let r = region(CostKind::Quadratic, 1.0, 5.0, 4.0);
        assert_eq!(
            max_feasible_step(0, StepDirection::Increase, &[2.0], &r),
            0.0
        );
    }

    #[test]
    fn decrease_step_from_positive_position() {
        // Leaving z = 1 frees its own cost, so a decrease may reach -2.
        let r = region(CostKind::Quadratic, 1.0, 5.0, 4.0);
        let step = max_feasible_step(0, StepDirection::Decrease, &[1.0], &r);
        assert!((step - 3.0).abs() < 1e-12);
    }
}
