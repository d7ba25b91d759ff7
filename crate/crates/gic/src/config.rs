//! Experiment configuration (TOML) and CSV ingestion.
//!
//! Every CSV column must appear either as the label column or in the feature
//! list (possibly with role `drop`). Categorical columns are either mapped to
//! numbers or one-hot encoded into one column per observed value, named
//! `column=value`; the expanded columns inherit the source column's role.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledDataset};
use crate::error::{GicError, Result};
use crate::feasibility::{BoundSpec, CostKind, CostSpec, Direction, FeaturePartition, FeatureRole};
use crate::forest::ForestParams;
use crate::indirect::{DEFAULT_CV_FOLDS, DEFAULT_SIGMA_GRID};
use crate::optimizers::HeuristicParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Unchangeable,
    Direct,
    Indirect,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Numeric,
    /// Explicit value-to-number mapping, e.g. `yes = 1, no = 0`.
    Map {
        values: BTreeMap<String, f64>,
    },
    OneHot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default)]
    pub encoding: Encoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub cost_increase: f64,
    #[serde(default)]
    pub cost_decrease: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    /// Kernel bandwidth for an indirect feature; skips cross-validation when
    /// every indirect feature has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Positive when the numeric value is at most the threshold.
    AtMost(f64),
    AtLeast(f64),
    Equals(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub column: String,
    pub positive: LabelRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndirectConfig {
    pub grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for IndirectConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_SIGMA_GRID.to_vec(),
            folds: DEFAULT_CV_FOLDS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let d = ForestParams::default();
        Self {
            n_trees: d.n_trees,
            max_depth: d.max_depth,
            features_per_split: d.features_per_split,
            seed: d.seed,
        }
    }
}

impl ForestConfig {
    pub fn params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            features_per_split: self.features_per_split,
            seed: self.seed,
        }
    }
}

/// Per-method search parameters; defaults follow the benchmark table
/// (300/300/150 iterations, m = 15, beta = 0.4, gamma = 0.1, xi = 6).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodsConfig {
    pub hc_ls: HeuristicParams,
    pub ga: HeuristicParams,
    pub ga_ls: HeuristicParams,
}

impl Default for MethodsConfig {
    fn default() -> Self {
        Self {
            hc_ls: HeuristicParams::default(),
            ga: HeuristicParams {
                alpha: Some(0.30),
                ..HeuristicParams::default()
            },
            ga_ls: HeuristicParams {
                max_iters: 150,
                ..HeuristicParams::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InstancePolicy {
    /// Holdout instances whose true label is the undesirable class.
    PositiveLabel,
    /// Holdout instances the recommendation model scores at 0.5 or above.
    #[default]
    PositivePredicted,
    All,
    /// All positive-label instances plus as many randomly chosen negatives.
    Balanced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub seed: u64,
    pub folds: usize,
    /// Explicit budget grid; when empty, `budget_count` evenly spaced values
    /// from `budget_min` to `budget_max` are used.
    pub budgets: Vec<f64>,
    pub budget_min: f64,
    pub budget_max: f64,
    pub budget_count: usize,
    pub methods: Vec<crate::evaluation::Method>,
    pub instances: InstancePolicy,
    /// Cap on instances optimised per run (taken in fold order).
    pub max_instances: Option<usize>,
    pub tol: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: 10,
            budgets: Vec::new(),
            budget_min: 0.0,
            budget_max: 14.0,
            budget_count: 15,
            methods: crate::evaluation::Method::ALL.to_vec(),
            instances: InstancePolicy::PositivePredicted,
            max_instances: None,
            tol: crate::feasibility::DEFAULT_TOL,
        }
    }
}

impl EvaluationConfig {
    pub fn budget_grid(&self) -> Result<Vec<f64>> {
        let grid = if self.budgets.is_empty() {
            match self.budget_count {
                0 => Vec::new(),
                1 => vec![self.budget_min],
                k => (0..k)
                    .map(|i| {
                        self.budget_min
                            + (self.budget_max - self.budget_min) * i as f64 / (k - 1) as f64
                    })
                    .collect(),
            }
        } else {
            self.budgets.clone()
        };
        if grid.is_empty() {
            return Err(GicError::Config("budget grid is empty".into()));
        }
        if grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(GicError::Config(
                "budgets must be finite and nonnegative".into(),
            ));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GicError::Config(
                "budget grid must be strictly increasing".into(),
            ));
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub label: LabelConfig,
    pub cost_kind: CostKind,
    pub features: Vec<FeatureConfig>,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub indirect: IndirectConfig,
    #[serde(default)]
    pub methods: MethodsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GicError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GicError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn dataset_path(&self) -> PathBuf {
        if self.dataset.path.is_absolute() {
            self.dataset.path.clone()
        } else {
            self.base_dir.join(&self.dataset.path)
        }
    }

    /// Bandwidths for the indirect features in partition order, if every one
    /// of them is configured.
    pub fn fixed_sigmas(&self, problem: &Problem) -> Option<Vec<f64>> {
        problem
            .partition
            .indirect()
            .iter()
            .map(|&i| problem.sources[i].and_then(|f| self.features[f].sigma))
            .collect()
    }
}

/// A dataset ingested under a configuration, with everything the searches
/// need indexed by direct-feature position.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub data: LabeledDataset,
    pub partition: FeaturePartition,
    pub costs: CostSpec,
    pub raw_bounds: BoundSpec,
    pub directions: Vec<Direction>,
    /// For each expanded column, the index of its feature config.
    pub sources: Vec<Option<usize>>,
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Problem> {
    let path = config.dataset_path();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.dataset.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(&path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec?.iter().map(str::to_owned).collect::<Vec<String>>());
    }
    ingest(config, &header, &records)
}

/// Builds a [`Problem`] from an already parsed table.
pub fn ingest(
    config: &ExperimentConfig,
    header: &[String],
    records: &[Vec<String>],
) -> Result<Problem> {
    let by_name: BTreeMap<&str, usize> = config
        .features
        .iter()
        .enumerate()
        .map(|(k, f)| (f.name.as_str(), k))
        .collect();
    if by_name.len() != config.features.len() {
        return Err(GicError::Config("duplicate feature names in config".into()));
    }
    let mut column_of = BTreeMap::new();
    for (c, name) in header.iter().enumerate() {
        if name != &config.label.column && !by_name.contains_key(name.as_str()) {
            return Err(GicError::Config(format!(
                "column '{name}' is not mapped in the config (declare it or give it role \"drop\")"
            )));
        }
        column_of.insert(name.as_str(), c);
    }
    let label_col = *column_of.get(config.label.column.as_str()).ok_or_else(|| {
        GicError::Config(format!("label column '{}' not found", config.label.column))
    })?;
    for f in &config.features {
        if !column_of.contains_key(f.name.as_str()) {
            return Err(GicError::Config(format!(
                "configured feature '{}' not in dataset",
                f.name
            )));
        }
    }

    let cell = |r: usize, c: usize| -> Result<&str> {
        let v = records[r].get(c).map(String::as_str).unwrap_or("");
        if v.is_empty() || v == "NA" || v == "?" {
            Err(GicError::Ingestion {
                row: r + 1,
                column: header[c].clone(),
                message: "missing value".into(),
            })
        } else {
            Ok(v)
        }
    };
    let numeric = |r: usize, c: usize| -> Result<f64> {
        let v = cell(r, c)?;
        v.parse::<f64>().map_err(|_| GicError::Ingestion {
            row: r + 1,
            column: header[c].clone(),
            message: format!("'{v}' is not numeric"),
        })
    };

    let n = records.len();
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let positive = match &config.label.positive {
            LabelRule::AtMost(t) => numeric(r, label_col)? <= *t,
            LabelRule::AtLeast(t) => numeric(r, label_col)? >= *t,
            LabelRule::Equals(s) => cell(r, label_col)? == s,
        };
        labels.push(if positive {
            Label::Positive
        } else {
            Label::Negative
        });
    }

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut roles = Vec::new();
    let mut sources = Vec::new();
    for (fi, f) in config.features.iter().enumerate() {
        let c = column_of[f.name.as_str()];
        let role = match f.role {
            ColumnRole::Drop => continue,
            ColumnRole::Unchangeable => FeatureRole::Unchangeable,
            ColumnRole::Direct => FeatureRole::DirectlyChangeable,
            ColumnRole::Indirect => FeatureRole::IndirectlyChangeable,
        };
        match &f.encoding {
            Encoding::Numeric => {
                names.push(f.name.clone());
                columns.push((0..n).map(|r| numeric(r, c)).collect::<Result<_>>()?);
                roles.push(role);
                sources.push(Some(fi));
            }
            Encoding::Map { values } => {
                let col = (0..n)
                    .map(|r| {
                        let v = cell(r, c)?;
                        values.get(v).copied().ok_or_else(|| GicError::Ingestion {
                            row: r + 1,
                            column: f.name.clone(),
                            message: format!("value '{v}' has no mapping"),
                        })
                    })
                    .collect::<Result<_>>()?;
                names.push(f.name.clone());
                columns.push(col);
                roles.push(role);
                sources.push(Some(fi));
            }
            Encoding::OneHot => {
                if role == FeatureRole::DirectlyChangeable {
                    return Err(GicError::Config(format!(
                        "one-hot feature '{}' cannot be directly changeable",
                        f.name
                    )));
                }
                let raw: Vec<&str> = (0..n).map(|r| cell(r, c)).collect::<Result<_>>()?;
                let levels: BTreeSet<&str> = raw.iter().copied().collect();
                for level in levels {
                    names.push(format!("{}={}", f.name, level));
                    columns.push(
                        raw.iter()
                            .map(|v| if *v == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    roles.push(role);
                    sources.push(Some(fi));
                }
            }
        }
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| columns.iter().map(|col| col[r]).collect())
        .collect();
    let data = LabeledDataset::new(names, rows, labels)?;
    let partition = FeaturePartition::new(roles);

    let mut up = Vec::new();
    let mut down = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut directions = Vec::new();
    for &i in partition.direct() {
        let f = &config.features[sources[i].expect("configured column")];
        let observed = |pick: fn(f64, f64) -> f64, init: f64| {
            data.rows().iter().map(|r| r[i]).fold(init, pick)
        };
        up.push(f.cost_increase);
        down.push(f.cost_decrease);
        lower.push(f.lower.unwrap_or_else(|| observed(f64::min, f64::INFINITY)));
        upper.push(
            f.upper
                .unwrap_or_else(|| observed(f64::max, f64::NEG_INFINITY)),
        );
        directions.push(f.direction.unwrap_or(Direction::Both));
        if f.cost_increase == 0.0 && f.cost_decrease == 0.0 {
            log::warn!(
                "direct feature '{}' has no cost in either direction",
                f.name
            );
        }
    }
    let costs = CostSpec::new(up, down, config.cost_kind)?;
    let raw_bounds = BoundSpec::new(lower, upper)?;
    for (k, &i) in partition.direct().iter().enumerate() {
        if let Some(r) = data
            .rows()
            .iter()
            .position(|row| row[i] < raw_bounds.lower[k] || row[i] > raw_bounds.upper[k])
        {
            return Err(GicError::Ingestion {
                row: r + 1,
                column: data.names()[i].clone(),
                message: "value outside configured bounds".into(),
            });
        }
    }

    Ok(Problem {
        data,
        partition,
        costs,
        raw_bounds,
        directions,
        sources,
    })
}
