//! Leakage-free evaluation over budget grids.
//!
//! The dataset is split into a training half, on which the recommendation
//! model (forest plus indirect-feature regression) is fitted, and a holdout
//! half cut into `k` folds. Instances of fold `i` are optimised against the
//! recommendation model and the resulting feature vectors are scored by an
//! evaluation forest trained on the holdout minus fold `i`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lvp_bi, lvp_fi};
use crate::config::{ExperimentConfig, InstancePolicy, MethodsConfig, Problem};
use crate::data::{Label, LabeledDataset};
use crate::error::{check_len, GicError, Result};
use crate::feasibility::{hardline_bounds, FeasibleRegion, FeaturePartition};
use crate::forest::{train_forest, Forest};
use crate::indirect::{cv_sigma, IndirectModel};
use crate::objective::ObjectiveContext;
use crate::optimizers::{ga, ga_ls, hill_climb, PerturbationSampler, SearchOutcome};

/// Scales below this are raised to it when sampling perturbations.
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    HcLs,
    Ga,
    GaLs,
    LvpFi,
    LvpBi,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::HcLs,
        Method::Ga,
        Method::GaLs,
        Method::LvpFi,
        Method::LvpBi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::HcLs => "hc-ls",
            Method::Ga => "ga",
            Method::GaLs => "ga-ls",
            Method::LvpFi => "lvp-fi",
            Method::LvpBi => "lvp-bi",
        }
    }

    pub fn is_heuristic(self) -> bool {
        matches!(self, Method::HcLs | Method::Ga | Method::GaLs)
    }

    fn index(self) -> u64 {
        Method::ALL.iter().position(|m| *m == self).expect("listed") as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GicError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GicError::Config(format!("unknown method '{s}'")))
    }
}

/// Runs `method` from the context's instance with a fresh random stream
/// seeded by `seed`. `scales` are the per-direct-feature step sizes.
pub fn run_method(
    method: Method,
    ctx: &ObjectiveContext<'_>,
    params: &MethodsConfig,
    scales: &[f64],
    seed: u64,
) -> Result<SearchOutcome> {
    check_len("sampler scales", ctx.dim(), scales.len())?;
    let mut sampler = PerturbationSampler::new(scales, SCALE_FLOOR, seed);
    match method {
        Method::HcLs => hill_climb(ctx, &mut sampler, &params.hc_ls),
        Method::Ga => ga(ctx, &mut sampler, &params.ga),
        Method::GaLs => ga_ls(ctx, &mut sampler, &params.ga_ls),
        Method::LvpFi => lvp_fi(ctx, sampler.rng()),
        Method::LvpBi => lvp_bi(ctx),
    }
}

/// Seed mixing (splitmix64 finaliser), used to derive independent streams.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Recommendation model: the classifier, the indirect-feature regression and
/// the perturbation step sizes, all fitted on one set of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub forest: Forest,
    pub indirect: Option<IndirectModel>,
    /// Training standard deviation of each direct feature.
    pub scales: Vec<f64>,
}

const BUNDLE_FORMAT: &str = "gic-model";
const BUNDLE_VERSION: u32 = 1;

impl ModelBundle {
    /// Fits every component on the given rows of the problem's dataset.
    pub fn fit(config: &ExperimentConfig, problem: &Problem, rows: &[usize]) -> Result<Self> {
        let data = problem.data.subset(rows);
        let forest = train_forest(&data, &config.forest.params())?;
        let partition = &problem.partition;
        let indirect = if partition.indirect().is_empty() {
            None
        } else {
            let sigma = match config.fixed_sigmas(problem) {
                Some(s) => s,
                None => cv_sigma(
                    &data,
                    partition,
                    &config.indirect.grid,
                    config.indirect.folds,
                    config.indirect.seed,
                )?,
            };
            log::info!("indirect-feature bandwidths: {sigma:?}");
            Some(IndirectModel::from_dataset(&data, partition, sigma)?)
        };
        let sd = data.std_devs();
        let scales = partition.direct().iter().map(|&i| sd[i]).collect();
        Ok(Self {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            feature_names: data.names().to_vec(),
            forest,
            indirect,
            scales,
        })
    }

    pub fn p(&self) -> usize {
        self.forest.p()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        let b: Self = serde_json::from_reader(r)?;
        if b.format != BUNDLE_FORMAT || b.version != BUNDLE_VERSION {
            return Err(GicError::InvalidSpec(format!(
                "unsupported model file {} v{}",
                b.format, b.version
            )));
        }
        check_len("model feature names", b.forest.p(), b.feature_names.len())?;
        Ok(b)
    }

    /// Checks that the bundle was trained on the problem's feature layout.
    pub fn check_compatible(&self, problem: &Problem) -> Result<()> {
        check_len("model features vs dataset", self.p(), problem.data.p())?;
        check_len(
            "model scales vs direct features",
            problem.partition.direct().len(),
            self.scales.len(),
        )?;
        if self.feature_names != problem.data.names() {
            return Err(GicError::InvalidSpec(
                "model feature names differ from the dataset's".into(),
            ));
        }
        Ok(())
    }

    /// Objective context for one instance of the problem at one budget.
    pub fn context<'a>(
        &'a self,
        problem: &'a Problem,
        instance: Vec<f64>,
        budget: f64,
        tol: f64,
    ) -> Result<ObjectiveContext<'a>> {
        let x_bar_d = FeaturePartition::gather(&instance, problem.partition.direct());
        let bounds = hardline_bounds(&x_bar_d, &problem.directions, &problem.raw_bounds)?;
        let region = FeasibleRegion::new(problem.costs.clone(), bounds.shifted, budget, tol)?;
        ObjectiveContext::new(
            &self.forest,
            self.indirect.as_ref(),
            &problem.partition,
            instance,
            region,
        )
    }
}

/// Training half and holdout folds, as sorted row indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

impl Split {
    pub fn holdout(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.folds.concat();
        all.sort_unstable();
        all
    }

    /// Holdout rows outside fold `i`.
    pub fn holdout_without(&self, i: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Random half/half split (training half gets the extra row when `n` is
/// odd) with the holdout cut into `k` folds whose sizes differ by at most 1.
pub fn split_and_fold(n: usize, seed: u64, k: usize) -> Result<Split> {
    if k == 0 {
        return Err(GicError::Config("fold count must be positive".into()));
    }
    if n < 2 * k {
        return Err(GicError::InsufficientData(format!(
            "{n} instances cannot fill a training half and {k} holdout folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n.div_ceil(2);
    let mut train = order[..n_train].to_vec();
    train.sort_unstable();
    let holdout = &order[n_train..];
    let folds = (0..k)
        .map(|f| {
            let lo = f * holdout.len() / k;
            let hi = (f + 1) * holdout.len() / k;
            let mut fold = holdout[lo..hi].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect();
    Ok(Split { train, folds })
}

fn ensure_disjoint(context: &str, a: &[usize], b: &[usize]) -> Result<()> {
    let set: BTreeSet<usize> = a.iter().copied().collect();
    if let Some(x) = b.iter().find(|x| set.contains(x)) {
        return Err(GicError::InvalidSpec(format!(
            "{context}: row {x} appears on both sides"
        )));
    }
    Ok(())
}

/// Everything the harness needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub seed: u64,
    pub folds: usize,
    pub budgets: Vec<f64>,
    pub methods: Vec<Method>,
    pub params: MethodsConfig,
    pub policy: InstancePolicy,
    pub max_instances: Option<usize>,
    pub tol: f64,
    /// Record per-instance wall time. Off by default so results files are
    /// reproducible byte for byte.
    pub timings: bool,
}

impl EvaluationPlan {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let e = &config.evaluation;
        if e.methods.is_empty() {
            return Err(GicError::Config("no methods selected".into()));
        }
        Ok(Self {
            seed: e.seed,
            folds: e.folds,
            budgets: e.budget_grid()?,
            methods: e.methods.clone(),
            params: config.methods.clone(),
            policy: e.instances,
            max_instances: e.max_instances,
            tol: e.tol,
            timings: false,
        })
    }
}

/// Per-instance outcome at one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Row index in the ingested dataset.
    pub instance: usize,
    pub fold: usize,
    pub label: i32,
    pub budget: f64,
    /// Evaluation-model probability of the unperturbed instance (indirect
    /// features re-estimated).
    pub initial_probability: f64,
    pub final_probability: f64,
    /// Recommendation-model objective before and after the search.
    pub initial_objective: f64,
    pub final_objective: f64,
    pub z: Vec<f64>,
    pub cost: f64,
    pub evaluations: u64,
    pub fallbacks: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: f64,
    pub n: usize,
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
    pub mean_evaluations: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub method: Method,
    pub seed: u64,
    pub baseline_mean: f64,
    pub points: Vec<CurvePoint>,
    pub records: Vec<InstanceRecord>,
}

/// Percentile of sorted data with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(budget: f64, records: &[&InstanceRecord]) -> CurvePoint {
    let mut probs: Vec<f64> = records.iter().map(|r| r.final_probability).collect();
    let n = probs.len();
    // Summed in instance order, as the baseline is.
    let mean = probs.iter().sum::<f64>() / n as f64;
    probs.sort_by(f64::total_cmp);
    let mean_evaluations = records.iter().map(|r| r.evaluations as f64).sum::<f64>() / n as f64;
    CurvePoint {
        budget,
        n,
        mean,
        p5: percentile(&probs, 0.05),
        p95: percentile(&probs, 0.95),
        mean_evaluations,
    }
}

/// Fitted recommendation and evaluation models plus the selected instances.
pub struct Harness<'a> {
    problem: &'a Problem,
    split: Split,
    recommend: ModelBundle,
    evaluators: Vec<Forest>,
    /// (fold, row) pairs to optimise, in fold then row order.
    selected: Vec<(usize, usize)>,
    baselines: Vec<f64>,
}

impl<'a> Harness<'a> {
    pub fn new(
        config: &ExperimentConfig,
        problem: &'a Problem,
        plan: &EvaluationPlan,
    ) -> Result<Self> {
        let split = split_and_fold(problem.data.n(), plan.seed, plan.folds)?;
        let recommend = ModelBundle::fit(config, problem, &split.train)?;

        let mut evaluators = Vec::with_capacity(plan.folds);
        for (i, fold) in split.folds.iter().enumerate() {
            ensure_disjoint("recommendation data vs evaluation fold", &split.train, fold)?;
            let rows = split.holdout_without(i);
            ensure_disjoint("evaluation-model data vs its fold", &rows, fold)?;
            let data = problem.data.subset(&rows);
            let mut params = config.forest.params();
            params.seed = mix_seed(&[params.seed, i as u64 + 1]);
            let forest = train_forest(&data, &params).map_err(|e| {
                GicError::InsufficientData(format!("evaluation model for fold {i}: {e}"))
            })?;
            evaluators.push(forest);
        }

        let selected = select_instances(&problem.data, &split, &recommend, plan)?;
        if selected.is_empty() {
            return Err(GicError::InsufficientData(
                "no holdout instance matches the selection policy".into(),
            ));
        }
        log::info!(
            "split: {} training rows, {} holdout rows in {} folds, {} instances selected",
            split.train.len(),
            split.holdout().len(),
            plan.folds,
            selected.len()
        );

        let mut harness = Self {
            problem,
            split,
            recommend,
            evaluators,
            selected,
            baselines: Vec::new(),
        };
        harness.baselines = harness
            .selected
            .iter()
            .map(|&(fold, row)| {
                let ctx = harness.recommend.context(
                    problem,
                    problem.data.row(row).to_vec(),
                    0.0,
                    plan.tol,
                )?;
                let x = ctx.assemble(&vec![0.0; ctx.dim()])?;
                harness.evaluators[fold].predict(&x)
            })
            .collect::<Result<_>>()?;
        Ok(harness)
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn recommendation_model(&self) -> &ModelBundle {
        &self.recommend
    }

    pub fn selected(&self) -> &[(usize, usize)] {
        &self.selected
    }

    /// Mean evaluation-model probability of the selected, unperturbed
    /// instances.
    pub fn baseline_mean(&self) -> f64 {
        self.baselines.iter().sum::<f64>() / self.baselines.len() as f64
    }

    pub fn evaluate_method(&self, method: Method, plan: &EvaluationPlan) -> Result<CurveResult> {
        let problem = self.problem;
        let per_instance: Vec<Vec<InstanceRecord>> = self
            .selected
            .par_iter()
            .zip(&self.baselines)
            .map(|(&(fold, row), &baseline)| {
                let seed = mix_seed(&[plan.seed, method.index(), row as u64]);
                plan.budgets
                    .iter()
                    .map(|&budget| {
                        let start = Instant::now();
                        let ctx = self.recommend.context(
                            problem,
                            problem.data.row(row).to_vec(),
                            budget,
                            plan.tol,
                        )?;
                        let out =
                            run_method(method, &ctx, &plan.params, &self.recommend.scales, seed)?;
                        let x = ctx.assemble(&out.z)?;
                        let final_probability = self.evaluators[fold].predict(&x)?;
                        let wall = start.elapsed().as_secs_f64() * 1e3;
                        Ok(InstanceRecord {
                            instance: row,
                            fold,
                            label: problem.data.label(row).sign(),
                            budget,
                            initial_probability: baseline,
                            final_probability,
                            initial_objective: out.initial_objective,
                            final_objective: out.objective,
                            cost: ctx.region().cost(&out.z),
                            z: out.z,
                            evaluations: out.evaluations,
                            fallbacks: ctx.fallbacks(),
                            seed,
                            wall_time_ms: plan.timings.then_some(wall),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let records: Vec<InstanceRecord> = per_instance.into_iter().flatten().collect();
        let points = plan
            .budgets
            .iter()
            .map(|&b| {
                let at: Vec<&InstanceRecord> = records.iter().filter(|r| r.budget == b).collect();
                summarize(b, &at)
            })
            .collect();
        Ok(CurveResult {
            method,
            seed: plan.seed,
            baseline_mean: self.baseline_mean(),
            points,
            records,
        })
    }
}

fn select_instances(
    data: &LabeledDataset,
    split: &Split,
    recommend: &ModelBundle,
    plan: &EvaluationPlan,
) -> Result<Vec<(usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[plan.seed, 0x5e1ec7]));
    let mut selected = Vec::new();
    for (f, fold) in split.folds.iter().enumerate() {
        let mut rows: Vec<usize> = match plan.policy {
            InstancePolicy::All => fold.clone(),
            InstancePolicy::PositiveLabel => fold
                .iter()
                .copied()
                .filter(|&r| data.label(r) == Label::Positive)
                .collect(),
            InstancePolicy::PositivePredicted => {
                let mut keep = Vec::new();
                for &r in fold {
                    if recommend.forest.predict(data.row(r))? >= 0.5 {
                        keep.push(r);
                    }
                }
                keep
            }
            InstancePolicy::Balanced => {
                let (pos, mut neg): (Vec<usize>, Vec<usize>) = fold
                    .iter()
                    .partition(|&&r| data.label(r) == Label::Positive);
                neg.shuffle(&mut rng);
                neg.truncate(pos.len());
                let mut rows = pos;
                rows.extend(neg);
                rows
            }
        };
        rows.sort_unstable();
        selected.extend(rows.into_iter().map(|r| (f, r)));
    }
    if let Some(cap) = plan.max_instances {
        selected.truncate(cap);
    }
    Ok(selected)
}

/// Runs every method of the plan.
pub fn evaluate(
    config: &ExperimentConfig,
    problem: &Problem,
    plan: &EvaluationPlan,
) -> Result<Vec<CurveResult>> {
    let harness = Harness::new(config, problem, plan)?;
    plan.methods
        .iter()
        .map(|&m| harness.evaluate_method(m, plan))
        .collect()
}

/// Writes the flat curve table: one row per (method, budget).
pub fn write_curve_table<W: Write>(results: &[CurveResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "budget",
        "method",
        "n",
        "mean",
        "p5",
        "p95",
        "mean_evaluations",
    ])?;
    for r in results {
        for p in &r.points {
            out.write_record([
                p.budget.to_string(),
                r.method.to_string(),
                p.n.to_string(),
                p.mean.to_string(),
                p.p5.to_string(),
                p.p95.to_string(),
                p.mean_evaluations.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
