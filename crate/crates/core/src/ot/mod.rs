//! Discrete optimal transport: measures, costs, couplings and solvers.

mod cost;
mod coupling;
mod measure;
mod network_simplex;
mod sinkhorn;

use serde::{Deserialize, Serialize};

pub use cost::{build_cost_matrix, build_cost_matrix_with, CostMatrix, GroundMetric};
pub use coupling::{Coupling, SolveStats, SolverMethod, MARGINAL_TOL};
pub use measure::DiscreteMeasure;

use crate::error::{Error, Result};

/// Largest tolerated difference between the total masses of two measures.
const MASS_BALANCE_TOL: f64 = 1e-9;

/// Entries at or below this value do not count as transported mass.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub entropic_epsilon: f64,
    /// Pivot cap for the exact solver, sweep cap for Sinkhorn.
    pub max_iterations: usize,
    /// Marginal tolerance for Sinkhorn convergence.
    pub convergence_tol: f64,
    pub support_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Exact,
            entropic_epsilon: 0.01,
            max_iterations: 10_000_000,
            convergence_tol: 1e-9,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

impl SolverConfig {
    pub fn entropic(epsilon: f64) -> Self {
        Self {
            method: SolverMethod::Entropic,
            entropic_epsilon: epsilon,
            max_iterations: 200_000,
            convergence_tol: 1e-6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.entropic_epsilon.is_finite() && self.entropic_epsilon > 0.0) {
            return Err(Error::input("ot", "entropic_epsilon must be > 0"));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::input("ot", "convergence_tol must be > 0"));
        }
        if self.support_threshold.is_nan() || self.support_threshold < 0.0 {
            return Err(Error::input("ot", "support_threshold must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::input("ot", "max_iterations must be positive"));
        }
        Ok(())
    }
}

fn check_problem(m1: &DiscreteMeasure, m2: &DiscreteMeasure, cost: &CostMatrix) -> Result<()> {
    if cost.shape() != (m1.len(), m2.len()) {
        return Err(Error::input(
            "ot",
            format!(
                "cost matrix is {:?} but measures have {} and {} points",
                cost.shape(),
                m1.len(),
                m2.len()
            ),
        ));
    }
    let gap = (m1.weights().sum() - m2.weights().sum()).abs();
    if gap > MASS_BALANCE_TOL {
        return Err(Error::input(
            "ot",
            format!("measures carry different total mass (gap {gap:e})"),
        ));
    }
    Ok(())
}

/// Exact optimal coupling minimising `sum_ij pi_ij * C_ij^p`.
pub fn solve_exact(m1: &DiscreteMeasure, m2: &DiscreteMeasure, cost: &CostMatrix) -> Result<Coupling> {
    solve_exact_with_limit(m1, m2, cost, SolverConfig::default().max_iterations)
}

fn solve_exact_with_limit(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    cost: &CostMatrix,
    max_pivots: usize,
) -> Result<Coupling> {
    check_problem(m1, m2, cost)?;
    let powered = cost.powered();
    let sol = network_simplex::transport_simplex(m1.weights(), m2.weights(), powered.view(), max_pivots)?;
    let objective = (&sol.flows * &powered).sum();
    Ok(Coupling::from_parts(
        sol.flows,
        m1.weights().to_owned(),
        m2.weights().to_owned(),
        objective,
        SolverMethod::Exact,
        sol.pivots,
    ))
}

/// Sinkhorn fixed point of the entropically regularized problem. The reported
/// objective is `<pi, C^p>` without the entropy term.
pub fn solve_entropic(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    cost: &CostMatrix,
    config: &SolverConfig,
) -> Result<Coupling> {
    config.validate()?;
    check_problem(m1, m2, cost)?;
    let powered = cost.powered();
    let sol = sinkhorn::sinkhorn_log(
        m1.weights(),
        m2.weights(),
        powered.view(),
        config.entropic_epsilon,
        config.max_iterations,
        config.convergence_tol,
    )?;
    let objective = (&sol.plan * &powered).sum();
    Ok(Coupling::from_parts(
        sol.plan,
        m1.weights().to_owned(),
        m2.weights().to_owned(),
        objective,
        SolverMethod::Entropic,
        sol.iterations,
    ))
}

/// Dispatch on `config.method`.
pub fn solve(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    cost: &CostMatrix,
    config: &SolverConfig,
) -> Result<Coupling> {
    config.validate()?;
    match config.method {
        SolverMethod::Exact => solve_exact_with_limit(m1, m2, cost, config.max_iterations),
        SolverMethod::Entropic => solve_entropic(m1, m2, cost, config),
    }
}

/// `W_p(m1, m2)`: the p-th root of the exact transport objective.
pub fn wasserstein(m1: &DiscreteMeasure, m2: &DiscreteMeasure, cost: &CostMatrix) -> Result<f64> {
    let pi = solve_exact(m1, m2, cost)?;
    Ok(pi.objective().max(0.0).powf(1.0 / cost.order()))
}
