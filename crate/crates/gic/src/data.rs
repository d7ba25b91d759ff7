use serde::{Deserialize, Serialize};

use crate::error::{check_len, GicError, Result};

/// Floor applied to per-feature standard deviations, relative to the
/// feature's magnitude.
pub const SIGMA_FLOOR_REL: f64 = 1e-6;

/// Binary class label: `Positive` is the undesirable class whose probability
/// is minimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(y: i32) -> Result<Self> {
        match y {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(GicError::InvalidSpec(format!(
                "label must be -1 or 1, got {other}"
            ))),
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

/// Dense row-major feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl LabeledDataset {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        check_len("dataset labels", rows.len(), labels.len())?;
        let p = names.len();
        for (r, row) in rows.iter().enumerate() {
            check_len("dataset row", p, row.len())?;
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(GicError::Ingestion {
                    row: r,
                    column: names[c].clone(),
                    message: "non-finite value".into(),
                });
            }
        }
        Ok(Self {
            names,
            rows,
            labels,
        })
    }

    /// Unnamed dataset, columns called `x0`, `x1`, ...
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let names = (0..p).map(|i| format!("x{i}")).collect();
        Self::new(names, rows, labels)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n().max(1) as f64;
        let mut means = vec![0.0; self.p()];
        for row in &self.rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Sample standard deviation of every column, floored at
    /// `SIGMA_FLOOR_REL * max(1, max |x|)` so constant columns stay usable as
    /// perturbation scales.
    pub fn std_devs(&self) -> Vec<f64> {
        let means = self.column_means();
        let n = self.n();
        let mut var = vec![0.0; self.p()];
        let mut scale = vec![1.0f64; self.p()];
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                let d = v - means[j];
                var[j] += d * d;
                scale[j] = scale[j].max(v.abs());
            }
        }
        let denom = n.saturating_sub(1).max(1) as f64;
        var.iter()
            .zip(&scale)
            .map(|(s, &sc)| (s / denom).sqrt().max(SIGMA_FLOOR_REL * sc))
            .collect()
    }
}
