use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground distance between two points. Euclidean is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMetric {
    #[default]
    Euclidean,
    Manhattan,
}

impl GroundMetric {
    pub fn distance(self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self {
            GroundMetric::Euclidean => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            GroundMetric::Manhattan => a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

/// Pairwise ground distances plus the Wasserstein order they are raised to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    entries: Array2<f64>,
    order: f64,
}

impl CostMatrix {
    /// Wrap precomputed distances. Entries must be finite and nonnegative.
    pub fn from_entries(entries: Array2<f64>, order: f64) -> Result<Self> {
        if !(order.is_finite() && order >= 1.0) {
            return Err(Error::input("ot", format!("order p must be >= 1, got {order}")));
        }
        if let Some(v) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::input("ot", format!("invalid cost entry {v}")));
        }
        Ok(Self { entries, order })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    /// Entrywise `d^p`, the matrix the transport objective is linear in.
    pub fn powered(&self) -> Array2<f64> {
        if self.order == 1.0 {
            self.entries.clone()
        } else if self.order == 2.0 {
            self.entries.mapv(|d| d * d)
        } else {
            let p = self.order;
            self.entries.mapv(|d| d.powf(p))
        }
    }

    pub fn mean(&self) -> f64 {
        self.entries.mean().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

/// Euclidean ground costs between two point sets.
pub fn build_cost_matrix(
    points_a: ArrayView2<'_, f64>,
    points_b: ArrayView2<'_, f64>,
    order: f64,
) -> Result<CostMatrix> {
    build_cost_matrix_with(points_a, points_b, order, GroundMetric::Euclidean)
}

pub fn build_cost_matrix_with(
    points_a: ArrayView2<'_, f64>,
    points_b: ArrayView2<'_, f64>,
    order: f64,
    metric: GroundMetric,
) -> Result<CostMatrix> {
    if points_a.ncols() != points_b.ncols() {
        return Err(Error::input(
            "ot",
            format!(
                "dimension mismatch: {} vs {}",
                points_a.ncols(),
                points_b.ncols()
            ),
        ));
    }
    if points_a.iter().chain(points_b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::input("ot", "non-finite coordinate in cost input"));
    }
    let entries = Array2::from_shape_fn((points_a.nrows(), points_b.nrows()), |(i, j)| {
        metric.distance(points_a.row(i), points_b.row(j))
    });
    CostMatrix::from_entries(entries, order)
}
