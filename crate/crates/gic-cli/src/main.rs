//! `gic`: train models, optimise single instances, and run budget sweeps
//! from an experiment config.

mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gic::config::{load_dataset, ExperimentConfig, InstancePolicy, Problem};
use gic::evaluation::{
    mix_seed, run_method, split_and_fold, write_curve_table, CurveResult, EvaluationPlan, Harness,
    Method, ModelBundle,
};

#[derive(Parser)]
#[command(
    name = "gic",
    version,
    about = "Budget-constrained inverse classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's evaluation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the recommendation model on the training half and save it.
    Train {
        #[command(flatten)]
        common: Common,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimise one instance with one method at one budget.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Cost budget B (0 leaves the instance unchanged).
        #[arg(long)]
        budget: f64,
        /// Row index (0-based, after the header) in the dataset.
        #[arg(long)]
        instance: usize,
        /// Model file from `train`; fitted on the fly when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report file (JSON); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall time in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Run the evaluation harness for one method over the budget grid.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Single budget instead of the config's grid.
        #[arg(long)]
        budget: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the evaluation harness for every configured method.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Restrict to these methods (repeatable).
        #[arg(long, value_enum)]
        method: Vec<MethodArg>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Output directory for per-method results and the curve table.
    #[arg(long)]
    out: PathBuf,
    /// Which holdout instances to optimise.
    #[arg(long, value_enum)]
    instances: Option<PolicyArg>,
    /// Cap on the number of instances.
    #[arg(long)]
    max_instances: Option<usize>,
    /// Record per-instance wall time (results are then no longer
    /// reproducible byte for byte).
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    HcLs,
    Ga,
    GaLs,
    LvpFi,
    LvpBi,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::HcLs => Method::HcLs,
            MethodArg::Ga => Method::Ga,
            MethodArg::GaLs => Method::GaLs,
            MethodArg::LvpFi => Method::LvpFi,
            MethodArg::LvpBi => Method::LvpBi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    PositiveLabel,
    PositivePredicted,
    All,
    Balanced,
}

impl From<PolicyArg> for InstancePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::PositiveLabel => InstancePolicy::PositiveLabel,
            PolicyArg::PositivePredicted => InstancePolicy::PositivePredicted,
            PolicyArg::All => InstancePolicy::All,
            PolicyArg::Balanced => InstancePolicy::Balanced,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn setup(common: &Common) -> Result<(ExperimentConfig, Problem)> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let mut config = ExperimentConfig::load(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.evaluation.seed = seed;
    }
    let problem = load_dataset(&config)
        .with_context(|| format!("loading dataset {}", config.dataset_path().display()))?;
    log::info!(
        "dataset: {} rows, {} features ({} direct, {} indirect)",
        problem.data.n(),
        problem.data.p(),
        problem.partition.direct().len(),
        problem.partition.indirect().len()
    );
    Ok((config, problem))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// The recommendation model: fitted on the training half of the seeded split.
fn fit_model(config: &ExperimentConfig, problem: &Problem) -> Result<ModelBundle> {
    let split = split_and_fold(
        problem.data.n(),
        config.evaluation.seed,
        config.evaluation.folds,
    )?;
    Ok(ModelBundle::fit(config, problem, &split.train)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, out } => {
            let (config, problem) = setup(&common)?;
            let start = Instant::now();
            let model = fit_model(&config, &problem)?;
            let mut w = create(&out)?;
            model.write_to(&mut w)?;
            w.flush()?;
            log::info!(
                "trained {} trees in {:.2}s; wrote {}",
                model.forest.n_trees(),
                start.elapsed().as_secs_f64(),
                out.display()
            );
        }
        Command::Optimize {
            common,
            method,
            budget,
            instance,
            model,
            out,
            timings,
        } => {
            let (config, problem) = setup(&common)?;
            let method = Method::from(method);
            if instance >= problem.data.n() {
                bail!(
                    "instance {instance} out of range (dataset has {} rows)",
                    problem.data.n()
                );
            }
            let bundle = match &model {
                Some(path) => {
                    let f = File::open(path)
                        .with_context(|| format!("opening model {}", path.display()))?;
                    ModelBundle::read_from(std::io::BufReader::new(f))?
                }
                None => fit_model(&config, &problem)?,
            };
            bundle.check_compatible(&problem)?;
            let start = Instant::now();
            let seed = mix_seed(&[config.evaluation.seed, instance as u64]);
            let ctx = bundle.context(
                &problem,
                problem.data.row(instance).to_vec(),
                budget,
                config.evaluation.tol,
            )?;
            let outcome = run_method(method, &ctx, &config.methods, &bundle.scales, seed)?;
            let wall = start.elapsed().as_secs_f64();
            log::info!(
                "{method} on instance {instance}: {:.4} -> {:.4} in {} evaluations ({wall:.2}s)",
                outcome.initial_objective,
                outcome.objective,
                outcome.evaluations
            );
            let rep = report::build(
                &problem,
                &ctx,
                method,
                budget,
                instance,
                seed,
                &outcome,
                timings.then_some(wall),
            )?;
            let text = serde_json::to_string_pretty(&rep)? + "\n";
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    w.write_all(text.as_bytes())?;
                    w.flush()?;
                }
                None => print!("{text}"),
            }
        }
        Command::Evaluate {
            common,
            method,
            budget,
            run,
        } => {
            let (config, problem) = setup(&common)?;
            let mut plan = plan_for(&config, &run)?;
            plan.methods = vec![method.into()];
            if let Some(b) = budget {
                plan.budgets = vec![b];
            }
            harness_run(&config, &problem, &plan, &run.out)?;
        }
        Command::Sweep {
            common,
            method,
            run,
        } => {
            let (config, problem) = setup(&common)?;
            let mut plan = plan_for(&config, &run)?;
            if !method.is_empty() {
                plan.methods = method.into_iter().map(Method::from).collect();
            }
            harness_run(&config, &problem, &plan, &run.out)?;
        }
    }
    Ok(())
}

fn plan_for(config: &ExperimentConfig, run: &RunArgs) -> Result<EvaluationPlan> {
    let mut plan = EvaluationPlan::from_config(config)?;
    if let Some(p) = run.instances {
        plan.policy = p.into();
    }
    if run.max_instances.is_some() {
        plan.max_instances = run.max_instances;
    }
    plan.timings = run.timings;
    Ok(plan)
}

fn harness_run(
    config: &ExperimentConfig,
    problem: &Problem,
    plan: &EvaluationPlan,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let harness = Harness::new(config, problem, plan)?;
    log::info!("baseline mean probability {:.4}", harness.baseline_mean());
    let mut results: Vec<CurveResult> = Vec::new();
    for &method in &plan.methods {
        let t = Instant::now();
        let result = harness.evaluate_method(method, plan)?;
        let evals: u64 = result.records.iter().map(|r| r.evaluations).sum();
        log::info!(
            "{method}: {} runs, {evals} evaluations, seed {}, {:.1}s",
            result.records.len(),
            plan.seed,
            t.elapsed().as_secs_f64()
        );
        let path = out.join(format!("results-{method}.json"));
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &result)?;
        w.write_all(b"\n")?;
        w.flush()?;
        results.push(result);
    }
    let table = out.join("curve.csv");
    let mut w = create(&table)?;
    write_curve_table(&results, &mut w)?;
    w.flush()?;
    log::info!(
        "wrote {} in {:.1}s",
        table.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
