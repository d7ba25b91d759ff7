//! Feature roles, change costs, bounds, and the Euclidean projection onto the
//! budget-and-box feasible set of perturbations.
//!
//! A perturbation `z` lives over the directly changeable features only and is
//! measured relative to the instance being optimized, so `z = 0` is always
//! feasible. The feasible set is
//!
//! ```text
//! { z : cost(z) <= budget,  lower'_i <= z_i <= upper'_i }
//! ```
//!
//! and [`project`] returns its nearest point to an arbitrary direction `w`.
//! The cost is separable and asymmetric, so the projection reduces to a
//! per-coordinate clamp parameterised by a single multiplier `lambda`, which is
//! found by safeguarded bisection.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, GicError, Result};

/// Default absolute tolerance on the budget constraint (cost units).
pub const DEFAULT_TOL: f64 = 1e-8;

const BRACKET_WIDTH: f64 = 1e-12;
const MAX_LAMBDA: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Unchangeable,
    DirectlyChangeable,
    IndirectlyChangeable,
}

/// Assignment of every feature index to exactly one role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePartition {
    roles: Vec<FeatureRole>,
    direct: Vec<usize>,
    unchangeable: Vec<usize>,
    indirect: Vec<usize>,
}

impl FeaturePartition {
    pub fn new(roles: Vec<FeatureRole>) -> Self {
        let mut direct = Vec::new();
        let mut unchangeable = Vec::new();
        let mut indirect = Vec::new();
        for (i, role) in roles.iter().enumerate() {
            match role {
                FeatureRole::Unchangeable => unchangeable.push(i),
                FeatureRole::DirectlyChangeable => direct.push(i),
                FeatureRole::IndirectlyChangeable => indirect.push(i),
            }
        }
        Self {
            roles,
            direct,
            unchangeable,
            indirect,
        }
    }

    /// Total feature count.
    pub fn p(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[FeatureRole] {
        &self.roles
    }

    pub fn direct(&self) -> &[usize] {
        &self.direct
    }

    pub fn unchangeable(&self) -> &[usize] {
        &self.unchangeable
    }

    pub fn indirect(&self) -> &[usize] {
        &self.indirect
    }

    pub fn require_direct(&self) -> Result<()> {
        if self.direct.is_empty() {
            Err(GicError::InvalidSpec(
                "at least one directly changeable feature is required".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Gathers the entries of `x` at the given indices.
    pub fn gather(x: &[f64], indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| x[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Linear,
    Quadratic,
}

/// Per-feature prices for increasing and decreasing each directly changeable
/// feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub increase: Vec<f64>,
    pub decrease: Vec<f64>,
    pub kind: CostKind,
}

impl CostSpec {
    pub fn new(increase: Vec<f64>, decrease: Vec<f64>, kind: CostKind) -> Result<Self> {
        check_len("cost spec", increase.len(), decrease.len())?;
        for (i, (&up, &down)) in increase.iter().zip(&decrease).enumerate() {
            if !(up.is_finite() && down.is_finite() && up >= 0.0 && down >= 0.0) {
                return Err(GicError::InvalidSpec(format!(
                    "costs of direct feature {i} must be finite and nonnegative, got (+{up}, -{down})"
                )));
            }
        }
        Ok(Self {
            increase,
            decrease,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.increase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increase.is_empty()
    }

    /// Cost contribution of moving feature `i` by `v`.
    #[inline]
    pub fn term(&self, i: usize, v: f64) -> f64 {
        let (price, magnitude) = if v >= 0.0 {
            (self.increase[i], v)
        } else {
            (self.decrease[i], -v)
        };
        if price == 0.0 || magnitude == 0.0 {
            return 0.0;
        }
        match self.kind {
            CostKind::Linear => price * magnitude,
            CostKind::Quadratic => price * magnitude * magnitude,
        }
    }

    fn total(&self, z: &[f64]) -> f64 {
        z.iter().enumerate().map(|(i, &v)| self.term(i, v)).sum()
    }
}

/// Total cost of a perturbation.
pub fn cost(z: &[f64], spec: &CostSpec) -> Result<f64> {
    check_len("cost", spec.len(), z.len())?;
    Ok(spec.total(z))
}

/// Absolute per-feature bounds, in feature units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("bound spec", lower.len(), upper.len())?;
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(GicError::InvalidSpec(format!(
                    "bounds of direct feature {i} are invalid: [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(len: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; len],
            upper: vec![f64::INFINITY; len],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Bounds on the perturbation `z = x_D - x_bar_D`.
    pub fn shift(&self, x_bar_d: &[f64]) -> Result<ShiftedBounds> {
        check_len("bound shift", self.len(), x_bar_d.len())?;
        let mut lower = Vec::with_capacity(self.len());
        let mut upper = Vec::with_capacity(self.len());
        for (i, &x) in x_bar_d.iter().enumerate() {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !(l <= x && x <= u) {
                return Err(GicError::InstanceOutOfBounds {
                    feature: i,
                    value: x,
                    lower: l,
                    upper: u,
                });
            }
            lower.push(l - x);
            upper.push(u - x);
        }
        Ok(ShiftedBounds { lower, upper })
    }
}

/// Bounds on the perturbation itself: `lower <= 0 <= upper` componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ShiftedBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("shifted bounds", lower.len(), upper.len())?;
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l <= 0.0 && 0.0 <= u) {
                return Err(GicError::InvalidSpec(format!(
                    "shifted bounds of direct feature {i} must bracket zero, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    #[inline]
    fn clamp(&self, i: usize, v: f64) -> f64 {
        v.min(self.upper[i]).max(self.lower[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    IncreaseOnly,
    DecreaseOnly,
    Both,
}

/// Bounds for one instance after applying the direction restrictions.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceBounds {
    pub absolute: BoundSpec,
    pub shifted: ShiftedBounds,
}

/// Hard-line bound setting: an increase-only feature may not drop below its
/// current value, a decrease-only feature may not rise above it.
pub fn hardline_bounds(
    x_bar_d: &[f64],
    directions: &[Direction],
    raw: &BoundSpec,
) -> Result<InstanceBounds> {
    check_len("hard-line bounds", raw.len(), x_bar_d.len())?;
    check_len("hard-line directions", raw.len(), directions.len())?;
    let mut lower = raw.lower.clone();
    let mut upper = raw.upper.clone();
    for (i, dir) in directions.iter().enumerate() {
        match dir {
            Direction::IncreaseOnly => lower[i] = x_bar_d[i],
            Direction::DecreaseOnly => upper[i] = x_bar_d[i],
            Direction::Both => {}
        }
        if lower[i] > upper[i] {
            return Err(GicError::ContradictoryDirection {
                feature: i,
                lower: lower[i],
                upper: upper[i],
            });
        }
    }
    let absolute = BoundSpec { lower, upper };
    let shifted = absolute.shift(x_bar_d)?;
    Ok(InstanceBounds { absolute, shifted })
}

/// The per-coordinate KKT solution for a fixed multiplier `lambda`.
///
/// Quadratic costs shrink `w` by `1 + 2 lambda c`; linear costs soft-threshold
/// it by `lambda c`. The price used is the one for the direction of `w`. The
/// result is clamped to the shifted box.
#[inline]
pub fn clamp_scaled(
    w: f64,
    lambda: f64,
    i: usize,
    costs: &CostSpec,
    bounds: &ShiftedBounds,
) -> f64 {
    if bounds.lower[i] == 0.0 && bounds.upper[i] == 0.0 {
        return 0.0;
    }
    let price = if w >= 0.0 {
        costs.increase[i]
    } else {
        costs.decrease[i]
    };
    if lambda == f64::INFINITY {
        // Zero-budget limit: every priced move collapses.
        return if price > 0.0 { 0.0 } else { bounds.clamp(i, w) };
    }
    let shrunk = match costs.kind {
        CostKind::Quadratic => w / (1.0 + 2.0 * lambda * price),
        CostKind::Linear => {
            if w >= 0.0 {
                (w - lambda * price).max(0.0)
            } else {
                (w + lambda * price).min(0.0)
            }
        }
    };
    bounds.clamp(i, shrunk)
}

/// Cost of the clamped point at multiplier `lambda`; nonincreasing in
/// `lambda` and tending to zero.
pub fn budget_residual(w: &[f64], lambda: f64, costs: &CostSpec, bounds: &ShiftedBounds) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, &wi)| costs.term(i, clamp_scaled(wi, lambda, i, costs, bounds)))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub z: Vec<f64>,
    pub lambda: f64,
}

/// Nearest point (in Euclidean distance) of the feasible set to `w`.
pub fn project(
    w: &[f64],
    costs: &CostSpec,
    bounds: &ShiftedBounds,
    budget: f64,
    tol: f64,
) -> Result<Projection> {
    check_len("projection costs", costs.len(), w.len())?;
    check_len("projection bounds", bounds.len(), w.len())?;
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(GicError::InvalidBudget(budget));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(GicError::InvalidTolerance(tol));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(GicError::NonFinite("projection input"));
    }

    let lambda = solve_multiplier(w, costs, bounds, budget, tol);
    let z = w
        .iter()
        .enumerate()
        .map(|(i, &wi)| clamp_scaled(wi, lambda, i, costs, bounds))
        .collect();
    Ok(Projection { z, lambda })
}

fn solve_multiplier(
    w: &[f64],
    costs: &CostSpec,
    bounds: &ShiftedBounds,
    budget: f64,
    tol: f64,
) -> f64 {
    let residual = |lambda: f64| budget_residual(w, lambda, costs, bounds);
    if residual(0.0) <= budget {
        return 0.0;
    }
    if budget == 0.0 {
        return f64::INFINITY;
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let r = residual(hi);
        if r <= budget {
            if budget - r <= tol {
                return hi;
            }
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi >= MAX_LAMBDA {
            return hi;
        }
    }

    // residual(lo) > budget >= residual(hi); keep hi on the feasible side.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = residual(mid);
        if r <= budget {
            hi = mid;
            if budget - r <= tol {
                break;
            }
        } else {
            lo = mid;
        }
        if hi - lo <= BRACKET_WIDTH * hi.max(1.0) {
            break;
        }
    }
    hi
}

/// Costs, perturbation bounds and budget for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleRegion {
    pub costs: CostSpec,
    pub bounds: ShiftedBounds,
    pub budget: f64,
    pub tol: f64,
}

impl FeasibleRegion {
    pub fn new(costs: CostSpec, bounds: ShiftedBounds, budget: f64, tol: f64) -> Result<Self> {
        check_len("feasible region", costs.len(), bounds.len())?;
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(GicError::InvalidBudget(budget));
        }
        if tol.is_nan() || tol <= 0.0 {
            return Err(GicError::InvalidTolerance(tol));
        }
        Ok(Self {
            costs,
            bounds,
            budget,
            tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.costs.len()
    }

    pub fn project(&self, w: &[f64]) -> Result<Vec<f64>> {
        project(w, &self.costs, &self.bounds, self.budget, self.tol).map(|p| p.z)
    }

    pub fn cost(&self, z: &[f64]) -> f64 {
        self.costs.total(z)
    }

    /// Bounds hold exactly and the budget within `tol`.
    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .enumerate()
                .all(|(i, &v)| self.bounds.lower[i] <= v && v <= self.bounds.upper[i])
            && self.cost(z) <= self.budget + self.tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(up: &[f64], down: &[f64]) -> CostSpec {
        CostSpec::new(up.to_vec(), down.to_vec(), CostKind::Quadratic).unwrap()
    }

    fn sym_box(n: usize, r: f64) -> ShiftedBounds {
        ShiftedBounds::new(vec![-r; n], vec![r; n]).unwrap()
    }

    #[test]
    fn cost_examples() {
        let up = [3.0, 1.0];
        let down = [1.0, 2.0];
        let z = [1.0, -2.0];
        assert_eq!(cost(&[0.0, 0.0], &quad(&up, &down)).unwrap(), 0.0);
        assert_eq!(cost(&z, &quad(&up, &down)).unwrap(), 11.0);
        let lin = CostSpec::new(up.to_vec(), down.to_vec(), CostKind::Linear).unwrap();
        assert_eq!(cost(&z, &lin).unwrap(), 7.0);
        assert!(matches!(
            cost(&[1.0], &lin),
            Err(GicError::Dimension { .. })
        ));
    }

    #[test]
    fn negative_cost_rejected() {
        assert!(CostSpec::new(vec![-1.0], vec![0.0], CostKind::Linear).is_err());
    }

    #[test]
    fn clamp_scaled_examples() {
        let c = quad(&[1.0], &[1.0]);
        assert_eq!(clamp_scaled(0.5, 0.0, 0, &c, &sym_box(1, 1.0)), 0.5);
        let h = clamp_scaled(2.0, 0.9142, 0, &c, &sym_box(1, 10.0));
        assert!((h - 2.0 / 2.8284).abs() < 1e-4);
        assert_eq!(clamp_scaled(5.0, 0.0, 0, &c, &sym_box(1, 1.0)), 1.0);
    }

    #[test]
    fn clamp_uses_direction_price() {
        let c = quad(&[0.0], &[1.0]);
        let b = sym_box(1, 10.0);
        assert_eq!(clamp_scaled(3.0, 5.0, 0, &c, &b), 3.0);
        assert!((clamp_scaled(-3.0, 1.0, 0, &c, &b) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn project_zero_is_zero() {
        let p = project(
            &[0.0; 3],
            &quad(&[1.0; 3], &[1.0; 3]),
            &sym_box(3, 1.0),
            0.5,
            1e-8,
        )
        .unwrap();
        assert_eq!(p.z, vec![0.0; 3]);
        assert_eq!(p.lambda, 0.0);
    }

    #[test]
    fn project_active_budget() {
        let p = project(
            &[2.0, 2.0],
            &quad(&[1.0; 2], &[1.0; 2]),
            &sym_box(2, 10.0),
            1.0,
            1e-8,
        )
        .unwrap();
        let expected = 1.0 / 2f64.sqrt();
        assert!((p.z[0] - expected).abs() < 1e-5);
        assert!((p.z[1] - expected).abs() < 1e-5);
        assert!((p.lambda - 0.91421).abs() < 1e-5);
        let scale = 1.0 + 2.0 * p.lambda;
        assert!((scale * scale - 8.0).abs() < 1e-6);
    }

    #[test]
    fn project_slack_budget_is_clamp() {
        let p = project(
            &[3.0],
            &quad(&[1.0], &[1.0]),
            &sym_box(1, 10.0),
            100.0,
            1e-8,
        )
        .unwrap();
        assert_eq!(p.z, vec![3.0]);
        assert_eq!(p.lambda, 0.0);
    }

    #[test]
    fn project_rejects_negative_budget() {
        let r = project(&[1.0], &quad(&[1.0], &[1.0]), &sym_box(1, 1.0), -1.0, 1e-8);
        assert!(matches!(r, Err(GicError::InvalidBudget(_))));
    }

    #[test]
    fn zero_budget_collapses() {
        let p = project(
            &[1.0, -4.0],
            &quad(&[1.0, 2.0], &[1.0, 2.0]),
            &sym_box(2, 10.0),
            0.0,
            1e-8,
        )
        .unwrap();
        assert_eq!(p.z, vec![0.0, 0.0]);
        let free = project(
            &[1.0, -4.0],
            &quad(&[0.0, 2.0], &[1.0, 2.0]),
            &sym_box(2, 10.0),
            0.0,
            1e-8,
        )
        .unwrap();
        assert_eq!(free.z, vec![1.0, 0.0]);
    }

    #[test]
    fn frozen_feature_stays_put() {
        let b = ShiftedBounds::new(vec![0.0, -5.0], vec![0.0, 5.0]).unwrap();
        let p = project(&[4.0, 1.0], &quad(&[1.0, 1.0], &[1.0, 1.0]), &b, 10.0, 1e-8).unwrap();
        assert_eq!(p.z, vec![0.0, 1.0]);
    }

    #[test]
    fn cost_free_direction_never_binds() {
        let c = quad(&[0.0, 1.0], &[0.0, 1.0]);
        let p = project(&[3.0, 3.0], &c, &sym_box(2, 10.0), 1.0, 1e-8).unwrap();
        assert_eq!(p.z[0], 3.0);
        assert!((p.z[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_projection_soft_thresholds() {
        let c = CostSpec::new(vec![1.0, 1.0], vec![1.0, 1.0], CostKind::Linear).unwrap();
        // Minimising the distance under z1 + z2 <= 1 from (2, 1) moves both
        // coordinates down equally: (1, 0).
        let p = project(&[2.0, 1.0], &c, &sym_box(2, 10.0), 1.0, 1e-10).unwrap();
        assert!((p.z[0] - 1.0).abs() < 1e-6, "{:?}", p);
        assert!(p.z[1].abs() < 1e-6);
    }

    #[test]
    fn hardline_examples() {
        let raw = BoundSpec::new(vec![0.0], vec![5.0]).unwrap();
        let up = hardline_bounds(&[2.0], &[Direction::IncreaseOnly], &raw).unwrap();
        assert_eq!(up.absolute.lower, vec![2.0]);
        assert_eq!(up.absolute.upper, vec![5.0]);
        assert_eq!(up.shifted.lower, vec![0.0]);
        assert_eq!(up.shifted.upper, vec![3.0]);

        let down = hardline_bounds(&[2.0], &[Direction::DecreaseOnly], &raw).unwrap();
        assert_eq!(down.absolute.lower, vec![0.0]);
        assert_eq!(down.absolute.upper, vec![2.0]);

        let both = hardline_bounds(&[2.0], &[Direction::Both], &raw).unwrap();
        assert_eq!(both.absolute, raw);
    }

    #[test]
    fn hardline_contradiction() {
        let raw = BoundSpec::new(vec![0.0], vec![5.0]).unwrap();
        let r = hardline_bounds(&[7.0], &[Direction::IncreaseOnly], &raw);
        assert!(matches!(r, Err(GicError::ContradictoryDirection { .. })));
    }

    #[test]
    fn partition_indices() {
        use FeatureRole::*;
        let p = FeaturePartition::new(vec![
            DirectlyChangeable,
            Unchangeable,
            IndirectlyChangeable,
            DirectlyChangeable,
        ]);
        assert_eq!(p.direct(), &[0, 3]);
        assert_eq!(p.unchangeable(), &[1]);
        assert_eq!(p.indirect(), &[2]);
        assert_eq!(p.p(), 4);
    }
}
