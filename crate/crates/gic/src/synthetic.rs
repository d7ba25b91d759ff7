//! A small synthetic problem with every feature kind, for tests and demos.
//!
//! Columns: `id` (dropped), `region` (categorical, unchangeable), `age`
//! (unchangeable), three direct features `exercise` (increase only),
//! `snacks` (decrease only) and `sleep` (either way), one indirect feature
//! `fitness` driven by `exercise` and `age`, and the label `outcome`
//! (`bad` is the positive class).

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ingest, ExperimentConfig, Problem};
use crate::error::Result;

const CONFIG: &str = r#"
cost_kind = "quadratic"

[dataset]
path = "synthetic.csv"

[label]
column = "outcome"
positive = { equals = "bad" }

[forest]
n_trees = 30
max_depth = 6
seed = 3

[evaluation]
seed = 5
folds = 4
budgets = [0.0, 1.0, 4.0]

[methods.hc_ls]
max_iters = 20

[methods.ga]
max_iters = 20
alpha = 0.3

[methods.ga_ls]
max_iters = 10

[[features]]
name = "id"
role = "drop"

[[features]]
name = "region"
role = "unchangeable"
encoding = { kind = "one_hot" }

[[features]]
name = "age"
role = "unchangeable"

[[features]]
name = "exercise"
role = "direct"
direction = "increase_only"
cost_increase = 2.0
lower = 0.0
upper = 6.0

[[features]]
name = "snacks"
role = "direct"
direction = "decrease_only"
cost_decrease = 1.5
lower = 0.0
upper = 6.0

[[features]]
name = "sleep"
role = "direct"
cost_increase = 1.0
cost_decrease = 1.0
lower = 4.0
upper = 10.0

[[features]]
name = "fitness"
role = "indirect"
sigma = 0.5
"#;

pub const HEADER: [&str; 8] = [
    "id", "region", "age", "exercise", "snacks", "sleep", "fitness", "outcome",
];

/// Config for the synthetic table; its dataset path is `synthetic.csv`
/// relative to `base_dir`.
pub fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml(CONFIG).expect("built-in config parses")
}

/// `n` rows of the synthetic table, without the header.
pub fn records(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = ["north", "south", "west"];
    (0..n)
        .map(|i| {
            let region = regions[rng.random_range(0..regions.len())];
            let age: f64 = rng.random_range(20..70) as f64;
            let exercise = (rng.random::<f64>() * 6.0 * 10.0).round() / 10.0;
            let snacks = (rng.random::<f64>() * 6.0 * 10.0).round() / 10.0;
            let sleep = ((4.0 + rng.random::<f64>() * 6.0) * 10.0).round() / 10.0;
            let noise: f64 = rng.sample(StandardNormal);
            let fitness =
                ((0.8 * exercise - 0.03 * age + 2.0 + 0.3 * noise) * 100.0).round() / 100.0;
            let region_shift = if region == "south" { 0.5 } else { 0.0 };
            let logit = 0.04 * (age - 45.0) - 0.45 * exercise + 0.55 * snacks
                - 0.35 * (sleep - 7.0).abs()
                - 0.5 * fitness
                + region_shift
                + 1.0;
            let p = 1.0 / (1.0 + (-logit).exp());
            let outcome = if rng.random::<f64>() < p {
                "bad"
            } else {
                "good"
            };
            vec![
                i.to_string(),
                region.to_string(),
                age.to_string(),
                exercise.to_string(),
                snacks.to_string(),
                sleep.to_string(),
                fitness.to_string(),
                outcome.to_string(),
            ]
        })
        .collect()
}

/// The synthetic table ingested under [`config`].
pub fn problem(n: usize, seed: u64) -> Result<Problem> {
    let header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
    ingest(&config(), &header, &records(n, seed))
}

/// Writes the table as CSV.
pub fn write_csv(path: &Path, n: usize, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
    w.write_record(HEADER)?;
    for r in records(n, seed) {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `synthetic.csv` and `synthetic.toml` into `dir` and returns the
/// config path.
pub fn write_fixture(dir: &Path, n: usize, seed: u64) -> Result<std::path::PathBuf> {
    write_csv(&dir.join("synthetic.csv"), n, seed)?;
    let path = dir.join("synthetic.toml");
    std::fs::File::create(&path)?.write_all(CONFIG.as_bytes())?;
    Ok(path)
}
