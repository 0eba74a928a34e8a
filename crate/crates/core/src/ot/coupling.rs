use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row and column marginal tolerance every solver output must meet.
pub const MARGINAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Exact,
    Entropic,
}

/// Diagnostics from one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: SolverMethod,
    /// Pivots for the exact solver, scaling sweeps for the entropic one.
    pub iterations: usize,
    /// Largest absolute row or column marginal violation of the returned plan.
    pub marginal_error: f64,
}

/// A transport plan between two measures together with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    matrix: Array2<f64>,
    source_marginal: Array1<f64>,
    target_marginal: Array1<f64>,
    objective: f64,
    stats: SolveStats,
}

impl Coupling {
    pub(crate) fn from_parts(
        matrix: Array2<f64>,
        source_marginal: Array1<f64>,
        target_marginal: Array1<f64>,
        objective: f64,
        method: SolverMethod,
        iterations: usize,
    ) -> Self {
        let marginal_error = marginal_error(
            matrix.view(),
            source_marginal.view(),
            target_marginal.view(),
        );
        Self {
            matrix,
            source_marginal,
            target_marginal,
            objective,
            stats: SolveStats {
                method,
                iterations,
                marginal_error,
            },
        }
    }

    /// Build a coupling from an explicit matrix, validating feasibility.
    /// Useful for hand-constructed plans; `cost_powered` supplies the objective.
    pub fn from_matrix(
        matrix: Array2<f64>,
        source_marginal: Array1<f64>,
        target_marginal: Array1<f64>,
        cost_powered: ArrayView2<'_, f64>,
    ) -> Result<Self> {
        if matrix.dim() != (source_marginal.len(), target_marginal.len())
            || matrix.dim() != cost_powered.dim()
        {
            return Err(Error::input("ot", "coupling shape does not match marginals"));
        }
        if matrix.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input("ot", "coupling entries must be finite and >= 0"));
        }
        let err = marginal_error(matrix.view(), source_marginal.view(), target_marginal.view());
        if err > MARGINAL_TOL {
            return Err(Error::input(
                "ot",
                format!("coupling violates marginals by {err:e}"),
            ));
        }
        let objective = (&matrix * &cost_powered).sum();
        Ok(Self::from_parts(
            matrix,
            source_marginal,
            target_marginal,
            objective,
            SolverMethod::Exact,
            0,
        ))
    }

    /// The independent coupling `p ⊗ q`.
    pub fn product(
        source_marginal: Array1<f64>,
        target_marginal: Array1<f64>,
        cost_powered: ArrayView2<'_, f64>,
    ) -> Result<Self> {
        let matrix = Array2::from_shape_fn(
            (source_marginal.len(), target_marginal.len()),
            |(i, j)| source_marginal[i] * target_marginal[j],
        );
        Self::from_matrix(matrix, source_marginal, target_marginal, cost_powered)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn source_marginal(&self) -> ArrayView1<'_, f64> {
        self.source_marginal.view()
    }

    pub fn target_marginal(&self) -> ArrayView1<'_, f64> {
        self.target_marginal.view()
    }

    /// `<π, C^p>` (no entropy term, even for entropic plans).
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    pub fn n_source(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_target(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn total_mass(&self) -> f64 {
        self.matrix.sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.matrix.row(i).sum()
    }

    /// Row `i` divided by its sum: the distribution of counterparts of source `i`.
    pub fn row_conditional(&self, i: usize) -> Result<Array1<f64>> {
        if i >= self.n_source() {
            return Err(Error::input("ot", format!("row {i} out of range")));
        }
        let row = self.matrix.row(i);
        let total = row.sum();
        if total <= 0.0 {
            return Err(Error::input(
                "ot",
                format!("row {i} carries no mass"),
            ));
        }
        Ok(row.mapv(|v| v / total))
    }

    /// Target indices receiving more than `threshold` mass from source `i`.
    pub fn support(&self, i: usize, threshold: f64) -> Vec<usize> {
        self.matrix
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > threshold)
            .map(|(j, _)| j)
            .collect()
    }

    /// Sparse `(i, j, mass)` triples above `threshold`, row-major.
    pub fn sparse_entries(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        self.matrix
            .indexed_iter()
            .filter(|(_, &v)| v > threshold)
            .map(|((i, j), &v)| (i, j, v))
            .collect()
    }
}

pub(crate) fn marginal_error(
    matrix: ArrayView2<'_, f64>,
    rows: ArrayView1<'_, f64>,
    cols: ArrayView1<'_, f64>,
) -> f64 {
    let row_err = matrix
        .rows()
        .into_iter()
        .zip(rows.iter())
        .map(|(r, w)| (r.sum() - w).abs())
        .fold(0.0, f64::max);
    let col_err = matrix
        .columns()
        .into_iter()
        .zip(cols.iter())
        .map(|(c, w)| (c.sum() - w).abs())
        .fold(0.0, f64::max);
    row_err.max(col_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn zero_cost(n: usize, m: usize) -> Array2<f64> {
        Array2::zeros((n, m))
    }

    #[test]
    fn row_conditional_examples() {
        let pi = Coupling::from_matrix(
            array![[0.5, 0.0], [0.0, 0.5]],
            array![0.5, 0.5],
            array![0.5, 0.5],
            zero_cost(2, 2).view(),
        )
        .unwrap();
        assert_eq!(pi.row_conditional(0).unwrap().to_vec(), vec![1.0, 0.0]);

        let pi = Coupling::from_matrix(
            array![[0.1, 0.15], [0.65, 0.1]],
            array![0.25, 0.75],
            array![0.75, 0.25],
            zero_cost(2, 2).view(),
        )
        .unwrap();
        let r = pi.row_conditional(0).unwrap();
        assert!((r[0] - 0.4).abs() < 1e-12 && (r[1] - 0.6).abs() < 1e-12);
        assert!((r.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_row_is_target_weights() {
        let q = array![0.2, 0.3, 0.5];
        let pi = Coupling::product(array![0.5, 0.5], q.clone(), zero_cost(2, 3).view()).unwrap();
        assert_eq!(pi.row_conditional(1).unwrap(), q);
        assert_eq!(pi.support(0, 1e-12), vec![0, 1, 2]);
    }

    #[test]
    fn zero_row_is_an_error() {
        let pi = Coupling::from_matrix(
            array![[0.0, 0.0], [0.5, 0.5]],
            array![0.0, 1.0],
            array![0.5, 0.5],
            zero_cost(2, 2).view(),
        )
        .unwrap();
        assert!(pi.row_conditional(0).is_err());
    }

    #[test]
    fn from_matrix_rejects_infeasible() {
        assert!(Coupling::from_matrix(
            array![[0.5, 0.1], [0.0, 0.4]],
            array![0.5, 0.5],
            array![0.5, 0.5],
            zero_cost(2, 2).view(),
        )
        .is_err());
    }
}
