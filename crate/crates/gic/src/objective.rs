//! The optimisation objective over perturbations of the directly changeable
//! features: rebuild the full feature vector (re-estimating the indirect
//! features) and score it with the classifier.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_len, GicError, Result};
use crate::feasibility::{FeasibleRegion, FeaturePartition};
use crate::forest::Classifier;
use crate::indirect::{IndirectModel, PreparedQuery};

pub struct ObjectiveContext<'a> {
    classifier: &'a dyn Classifier,
    indirect: Option<(&'a IndirectModel, PreparedQuery)>,
    partition: &'a FeaturePartition,
    instance: Vec<f64>,
    x_bar_d: Vec<f64>,
    region: FeasibleRegion,
    evaluations: AtomicU64,
    fallbacks: AtomicU64,
}

impl<'a> ObjectiveContext<'a> {
    /// `instance` is the full original feature vector; `region` describes
    /// perturbations of its directly changeable block.
    pub fn new(
        classifier: &'a dyn Classifier,
        indirect: Option<&'a IndirectModel>,
        partition: &'a FeaturePartition,
        instance: Vec<f64>,
        region: FeasibleRegion,
    ) -> Result<Self> {
        partition.require_direct()?;
        check_len("objective instance", partition.p(), instance.len())?;
        check_len(
            "objective classifier",
            partition.p(),
            classifier.n_features(),
        )?;
        check_len("objective region", partition.direct().len(), region.dim())?;
        if instance.iter().any(|v| !v.is_finite()) {
            return Err(GicError::NonFinite("objective instance"));
        }
        let indirect = match indirect {
            Some(model) => {
                check_len(
                    "indirect outputs",
                    partition.indirect().len(),
                    model.n_outputs(),
                )?;
                check_len(
                    "indirect direct inputs",
                    partition.direct().len(),
                    model.n_direct(),
                )?;
                let x_u = FeaturePartition::gather(&instance, partition.unchangeable());
                let prepared = model.prepare(&x_u)?;
                Some((model, prepared))
            }
            None => None,
        };
        let x_bar_d = FeaturePartition::gather(&instance, partition.direct());
        Ok(Self {
            classifier,
            indirect,
            partition,
            instance,
            x_bar_d,
            region,
            evaluations: AtomicU64::new(0),
            fallbacks: AtomicU64::new(0),
        })
    }

    pub fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    pub fn partition(&self) -> &FeaturePartition {
        self.partition
    }

    pub fn instance(&self) -> &[f64] {
        &self.instance
    }

    pub fn x_bar_d(&self) -> &[f64] {
        &self.x_bar_d
    }

    pub fn dim(&self) -> usize {
        self.x_bar_d.len()
    }

    pub fn omega(&self) -> f64 {
        self.classifier.omega()
    }

    /// Objective evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Evaluations in which the indirect estimate fell back to the nearest
    /// training point.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// Classifier output on the untouched instance, without re-estimating
    /// the indirect features. Not counted as an evaluation.
    pub fn raw_baseline(&self) -> f64 {
        self.classifier.predict_probability(&self.instance)
    }

    /// Full feature vector for perturbation `z`, in original feature order.
    pub fn assemble(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("perturbation", self.dim(), z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(GicError::NonFinite("perturbation"));
        }
        let mut x = self.instance.clone();
        let x_d: Vec<f64> = self.x_bar_d.iter().zip(z).map(|(a, b)| a + b).collect();
        for (&i, &v) in self.partition.direct().iter().zip(&x_d) {
            x[i] = v;
        }
        if let Some((model, prepared)) = &self.indirect {
            let pred = model.predict_prepared(prepared, &x_d)?;
            if pred.fallback {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
            }
            for (&i, v) in self.partition.indirect().iter().zip(pred.values) {
                x[i] = v;
            }
        }
        Ok(x)
    }

    /// Objective value of perturbation `z`; counts one evaluation.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        let x = self.assemble(z)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        Ok(self.classifier.predict_probability(&x))
    }
}
