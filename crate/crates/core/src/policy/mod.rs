//! Probabilistic policies over encoded features and the parity baselines the
//! transport audit is compared against.

mod logistic;
mod parity;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::DiscreteMeasure;

pub use logistic::{train_logistic, train_logistic_with, LogisticConfig, LogisticObjective};
pub use parity::{
    demographic_parity_difference, disparate_impact_ratio, equal_opportunity_gap, parity_report,
    DisparateImpact, GroupRates, ParityReport, DISPARATE_IMPACT_THRESHOLD,
};

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A binary logistic policy. Applying it maps a feature row to the outcome
/// simplex vector `(P(negative), P(positive))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub class_labels: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Identifies the feature encoding the weights were fit against.
    pub encoder_fingerprint: String,
}

impl Policy {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        Self {
            class_labels: vec!["0".to_string(), "1".to_string()],
            weights,
            intercept,
            encoder_fingerprint: String::new(),
        }
    }

    /// Policy that ignores its input and scores everyone `sigmoid(intercept)`.
    pub fn constant(n_features: usize, intercept: f64) -> Self {
        Self::new(vec![0.0; n_features], intercept)
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.encoder_fingerprint = fingerprint.into();
        self
    }

    pub fn with_labels(mut self, negative: impl Into<String>, positive: impl Into<String>) -> Self {
        self.class_labels = vec![negative.into(), positive.into()];
        self
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.weights.len() {
            return Err(Error::input(
                "policy",
                format!(
                    "feature matrix has {width} columns but the policy expects {}",
                    self.weights.len()
                ),
            ));
        }
        Ok(())
    }

    /// Positive-class probability for every row of `x`.
    pub fn positive_probabilities(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_width(x.ncols())?;
        let w = Array1::from(self.weights.clone());
        Ok(x.dot(&w).mapv(|z| sigmoid(z + self.intercept)))
    }

    /// Hard labels at `threshold` (positive when the probability is >= threshold).
    pub fn predict(&self, x: ArrayView2<'_, f64>, threshold: f64) -> Result<Vec<bool>> {
        Ok(self
            .positive_probabilities(x)?
            .iter()
            .map(|&p| p >= threshold)
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("policy", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Policy = serde_json::from_str(text).map_err(|e| Error::json("policy", e))?;
        if p.class_labels.len() != 2 {
            return Err(Error::input(
                "policy",
                "only binary policies (two class labels) are supported",
            ));
        }
        if p.weights.iter().any(|w| !w.is_finite()) || !p.intercept.is_finite() {
            return Err(Error::input("policy", "non-finite policy parameter"));
        }
        Ok(p)
    }
}

/// Outcome vectors a policy assigns to a sample, one simplex row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSet {
    pub outcomes: Array2<f64>,
    pub source_ids: Vec<usize>,
}

impl OutcomeSet {
    pub fn len(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.nrows() == 0
    }

    pub fn positive_probabilities(&self) -> Array1<f64> {
        self.outcomes.column(self.outcomes.ncols() - 1).to_owned()
    }
}

/// Row `i` becomes `(1 - sigmoid(w.x_i + b), sigmoid(w.x_i + b))`.
pub fn apply_policy(policy: &Policy, x: ArrayView2<'_, f64>) -> Result<OutcomeSet> {
    let probs = policy.positive_probabilities(x)?;
    let outcomes = Array2::from_shape_fn((probs.len(), 2), |(i, k)| {
        if k == 0 {
            1.0 - probs[i]
        } else {
            probs[i]
        }
    });
    Ok(OutcomeSet {
        outcomes,
        source_ids: (0..probs.len()).collect(),
    })
}

/// Uniform empirical measure over the outcome rows.
pub fn empirical_outcome_measure(outcomes: &OutcomeSet) -> Result<DiscreteMeasure> {
    if outcomes.is_empty() {
        return Err(Error::input("policy", "cannot build a measure from zero outcomes"));
    }
    DiscreteMeasure::uniform(outcomes.outcomes.clone())
}
