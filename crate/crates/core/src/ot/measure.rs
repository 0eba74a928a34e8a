use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finite weighted point cloud: `points` holds one point per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::input("ot", "a measure needs at least one point"));
        }
        if points.nrows() != weights.len() {
            return Err(Error::input(
                "ot",
                format!(
                    "{} points but {} weights",
                    points.nrows(),
                    weights.len()
                ),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("ot", "non-finite point coordinate"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::input("ot", format!("invalid weight {w}")));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::input(
                "ot",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights `1/n` on every row of `points`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::input("ot", "a measure needs at least one point"));
        }
        let weights = Array1::from_elem(n, 1.0 / n as f64);
        Self::new(points, weights)
    }

    /// Uniform measure on scalar points.
    pub fn uniform_scalar(values: &[f64]) -> Result<Self> {
        let points = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::input("ot", e.to_string()))?;
        Self::uniform(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    /// True when every weight equals `1/n` exactly as produced by [`uniform`](Self::uniform).
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| x == w)
    }

    /// Multiply every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            points: &self.points * s,
            weights: self.weights.clone(),
        }
    }
}
