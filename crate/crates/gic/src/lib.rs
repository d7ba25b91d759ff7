//! Generalized inverse classification.
//!
//! Given a trained black-box classifier and an instance it scores as likely
//! to belong to the undesirable class, find a change to the instance's
//! actionable features that lowers that probability while respecting
//! per-feature bounds and a total change budget. Features the user cannot
//! act on stay fixed; features that move as a consequence of the actions are
//! re-estimated with a kernel regression.
//!
//! Module map:
//! - [`feasibility`]: feature roles, costs, bounds and the budget projection.
//! - [`forest`]: the random forest classifier and the [`Classifier`] contract.
//! - [`indirect`]: kernel regression for indirectly changeable features.
//! - [`objective`]: the objective over perturbations.
//! - [`optimizers`]: hill climbing, genetic algorithm and their local search.
//! - [`baselines`]: one-feature-at-a-time sensitivity baselines.
//! - [`evaluation`]: leakage-free evaluation over budget grids.
//! - [`config`]: experiment configuration and CSV ingestion.
//! - [`synthetic`]: a small generated problem for tests and demos.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod feasibility;
pub mod forest;
pub mod indirect;
pub mod objective;
pub mod optimizers;
pub mod synthetic;

pub use data::{Label, LabeledDataset};
pub use error::{GicError, Result};
pub use feasibility::{
    cost, hardline_bounds, project, BoundSpec, CostKind, CostSpec, Direction, FeasibleRegion,
    FeaturePartition, FeatureRole, ShiftedBounds,
};
pub use forest::{train_forest, Classifier, Forest, ForestParams};
pub use indirect::IndirectModel;
pub use objective::ObjectiveContext;
pub use optimizers::{HeuristicParams, PerturbationSampler, SearchOutcome};
