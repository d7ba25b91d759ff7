//! Nadaraya–Watson estimate of the indirectly changeable features from the
//! directly changeable and unchangeable ones.
//!
//! Inputs are z-scored with training statistics before the Gaussian kernel is
//! applied; each output feature has its own bandwidth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{check_len, GicError, Result};
use crate::feasibility::FeaturePartition;

/// Below this total kernel weight the estimate falls back to the nearest
/// training point.
pub const WEIGHT_UNDERFLOW: f64 = 1e-300;

pub const DEFAULT_SIGMA_GRID: [f64; 6] = [0.1, 0.25, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_CV_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndirectModel {
    n_direct: usize,
    n_unchangeable: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Standardised `[x_D, x_U]` rows.
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndirectPrediction {
    pub values: Vec<f64>,
    /// True when the kernel weights underflowed for at least one output and
    /// the nearest training target was used.
    pub fallback: bool,
}

/// Query with its unchangeable part already folded into per-training-point
/// squared distances.
#[derive(Clone, Debug)]
pub struct PreparedQuery {
    base_sq: Vec<f64>,
}

impl IndirectModel {
    /// Fits on raw `[x_D, x_U]` input rows and `x_I` target rows.
    pub fn fit(
        n_direct: usize,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        sigma: Vec<f64>,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(GicError::InsufficientData(
                "kernel regression needs training data".into(),
            ));
        }
        check_len("kernel regression targets", inputs.len(), targets.len())?;
        let width = inputs[0].len();
        if n_direct > width {
            return Err(GicError::Dimension {
                context: "kernel regression inputs",
                expected: n_direct,
                found: width,
            });
        }
        for row in inputs {
            check_len("kernel regression input row", width, row.len())?;
        }
        for row in targets {
            check_len("kernel regression target row", sigma.len(), row.len())?;
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(GicError::InvalidSpec(format!(
                "bandwidth must be positive, got {s}"
            )));
        }
        let (mean, scale) = standardizer(inputs);
        let inputs = inputs
            .iter()
            .map(|r| standardize(r, &mean, &scale))
            .collect();
        Ok(Self {
            n_direct,
            n_unchangeable: width - n_direct,
            mean,
            scale,
            inputs,
            targets: targets.to_vec(),
            sigma,
        })
    }

    pub fn from_dataset(
        data: &LabeledDataset,
        partition: &FeaturePartition,
        sigma: Vec<f64>,
    ) -> Result<Self> {
        check_len("kernel regression partition", partition.p(), data.p())?;
        check_len(
            "kernel regression bandwidths",
            partition.indirect().len(),
            sigma.len(),
        )?;
        let (inputs, targets) = split_rows(data.rows(), partition);
        Self::fit(partition.direct().len(), &inputs, &targets, sigma)
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_outputs(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_direct(&self) -> usize {
        self.n_direct
    }

    pub fn n_unchangeable(&self) -> usize {
        self.n_unchangeable
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    pub fn prepare(&self, x_u: &[f64]) -> Result<PreparedQuery> {
        check_len("kernel regression x_U", self.n_unchangeable, x_u.len())?;
        let off = self.n_direct;
        let q: Vec<f64> = x_u
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[off + k]) / self.scale[off + k])
            .collect();
        let base_sq = self
            .inputs
            .iter()
            .map(|row| sq_dist(&row[off..], &q))
            .collect();
        Ok(PreparedQuery { base_sq })
    }

    /// Normalised kernel weights of every training point for output `j`, or
    /// `None` when they underflow.
    pub fn weights(
        &self,
        prepared: &PreparedQuery,
        x_d: &[f64],
        j: usize,
    ) -> Result<Option<Vec<f64>>> {
        check_len("kernel regression x_D", self.n_direct, x_d.len())?;
        let d = self.distances(prepared, x_d);
        let raw = kernel(&d, self.sigma[j]);
        let total: f64 = raw.iter().sum();
        if total < WEIGHT_UNDERFLOW {
            return Ok(None);
        }
        Ok(Some(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn predict_prepared(
        &self,
        prepared: &PreparedQuery,
        x_d: &[f64],
    ) -> Result<IndirectPrediction> {
        check_len("kernel regression x_D", self.n_direct, x_d.len())?;
        let d = self.distances(prepared, x_d);
        let mut values = vec![0.0; self.n_outputs()];
        let mut fallback = false;
        let mut done = vec![false; self.n_outputs()];
        for j in 0..self.n_outputs() {
            if done[j] {
                continue;
            }
            let sigma = self.sigma[j];
            let raw = kernel(&d, sigma);
            let total: f64 = raw.iter().sum();
            // Outputs sharing a bandwidth share the weights.
            for k in j..self.n_outputs() {
                if self.sigma[k] != sigma {
                    continue;
                }
                done[k] = true;
                if total < WEIGHT_UNDERFLOW {
                    fallback = true;
                    values[k] = self.targets[nearest(&d)][k];
                } else {
                    let acc: f64 = raw.iter().zip(&self.targets).map(|(w, t)| w * t[k]).sum();
                    values[k] = acc / total;
                }
            }
        }
        Ok(IndirectPrediction { values, fallback })
    }

    pub fn predict(&self, x_d: &[f64], x_u: &[f64]) -> Result<IndirectPrediction> {
        let prepared = self.prepare(x_u)?;
        self.predict_prepared(&prepared, x_d)
    }

    fn distances(&self, prepared: &PreparedQuery, x_d: &[f64]) -> Vec<f64> {
        let q: Vec<f64> = x_d
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k]) / self.scale[k])
            .collect();
        self.inputs
            .iter()
            .zip(&prepared.base_sq)
            .map(|(row, base)| base + sq_dist(&row[..self.n_direct], &q))
            .collect()
    }
}

fn split_rows(rows: &[Vec<f64>], partition: &FeaturePartition) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let inputs = rows
        .iter()
        .map(|r| {
            let mut v = FeaturePartition::gather(r, partition.direct());
            v.extend(partition.unchangeable().iter().map(|&i| r[i]));
            v
        })
        .collect();
    let targets = rows
        .iter()
        .map(|r| FeaturePartition::gather(r, partition.indirect()))
        .collect();
    (inputs, targets)
}

fn standardizer(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let width = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; width];
    for r in rows {
        for k in 0..width {
            let d = r[k] - mean[k];
            var[k] += d * d / n;
        }
    }
    // Constant columns carry no distance information; unit scale keeps them inert.
    let scale = var
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

fn standardize(row: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(mean.iter().zip(scale))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(sq: &[f64], sigma: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    sq.iter().map(|d| (-d * inv).exp()).collect()
}

fn nearest(sq: &[f64]) -> usize {
    let mut best = 0;
    for (i, d) in sq.iter().enumerate() {
        if *d < sq[best] {
            best = i;
        }
    }
    best
}

/// Picks, for each indirect feature, the grid bandwidth with the lowest
/// k-fold cross-validated mean squared error. Ties go to the earlier grid
/// entry.
pub fn cv_sigma(
    data: &LabeledDataset,
    partition: &FeaturePartition,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(GicError::Config("bandwidth grid is empty".into()));
    }
    if let Some(s) = grid.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(GicError::Config(format!(
            "bandwidth grid entry {s} is not positive"
        )));
    }
    if folds < 2 {
        return Err(GicError::Config(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    check_len("bandwidth cross-validation", partition.p(), data.p())?;
    let n_out = partition.indirect().len();
    if n_out == 0 {
        return Ok(Vec::new());
    }
    if grid.len() == 1 {
        return Ok(vec![grid[0]; n_out]);
    }
    if data.n() < folds {
        return Err(GicError::InsufficientData(format!(
            "{} instances cannot fill {folds} folds",
            data.n()
        )));
    }

    let (inputs, targets) = split_rows(data.rows(), partition);
    let n_direct = partition.direct().len();
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = |pos: usize| pos * folds / order.len();

    let mut sse = vec![vec![0.0; n_out]; grid.len()];
    for f in 0..folds {
        let test: Vec<usize> = (0..order.len())
            .filter(|&k| fold_of(k) == f)
            .map(|k| order[k])
            .collect();
        let train: Vec<usize> = (0..order.len())
            .filter(|&k| fold_of(k) != f)
            .map(|k| order[k])
            .collect();
        let tr_in: Vec<Vec<f64>> = train.iter().map(|&i| inputs[i].clone()).collect();
        let tr_out: Vec<Vec<f64>> = train.iter().map(|&i| targets[i].clone()).collect();
        for (g, &sigma) in grid.iter().enumerate() {
            let model = IndirectModel::fit(n_direct, &tr_in, &tr_out, vec![sigma; n_out])?;
            for &i in &test {
                let pred = model.predict(&inputs[i][..n_direct], &inputs[i][n_direct..])?;
                for k in 0..n_out {
                    let e = pred.values[k] - targets[i][k];
                    sse[g][k] += e * e;
                }
            }
        }
    }

    Ok((0..n_out)
        .map(|k| {
            let mut best = 0;
            for g in 1..grid.len() {
                if sse[g][k] < sse[best][k] {
                    best = g;
                }
            }
            grid[best]
        })
        .collect())
}
