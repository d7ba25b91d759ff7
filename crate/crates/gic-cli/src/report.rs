use gic::config::Problem;
use gic::evaluation::Method;
use gic::{ObjectiveContext, SearchOutcome};
use serde::Serialize;

/// Recommendation for one instance: per-feature changes and the probability
/// before and after.
#[derive(Serialize)]
pub struct Report {
    pub method: Method,
    pub instance: usize,
    pub budget: f64,
    pub seed: u64,
    /// Classifier output on the instance as recorded.
    pub raw_probability: f64,
    /// Objective at zero perturbation (indirect features re-estimated).
    pub initial_probability: f64,
    pub final_probability: f64,
    pub cost: f64,
    pub evaluations: u64,
    pub changes: Vec<Change>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// For indirect features `original` is the estimate at zero perturbation.
#[derive(Serialize)]
pub struct Change {
    pub feature: String,
    pub role: &'static str,
    pub original: f64,
    pub recommended: f64,
    pub delta: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn build(
    problem: &Problem,
    ctx: &ObjectiveContext<'_>,
    method: Method,
    budget: f64,
    instance: usize,
    seed: u64,
    outcome: &SearchOutcome,
    wall_time_s: Option<f64>,
) -> gic::Result<Report> {
    let before = ctx.assemble(&vec![0.0; ctx.dim()])?;
    let after = ctx.assemble(&outcome.z)?;
    let original = ctx.instance();
    let mut changes = Vec::new();
    for (k, &i) in problem.partition.direct().iter().enumerate() {
        changes.push(Change {
            feature: problem.data.names()[i].clone(),
            role: "direct",
            original: original[i],
            recommended: outcome.x_d[k],
            delta: outcome.z[k],
        });
    }
    for &i in problem.partition.indirect() {
        changes.push(Change {
            feature: problem.data.names()[i].clone(),
            role: "indirect",
            original: before[i],
            recommended: after[i],
            delta: after[i] - before[i],
        });
    }
    Ok(Report {
        method,
        instance,
        budget,
        seed,
        raw_probability: ctx.raw_baseline(),
        initial_probability: outcome.initial_objective,
        final_probability: outcome.objective,
        cost: ctx.region().cost(&outcome.z),
        evaluations: outcome.evaluations,
        changes,
        wall_time_s,
    })
}
