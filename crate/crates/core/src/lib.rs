//! Bias auditing of classification policies through optimal transport.
//!
//! The crate computes optimal couplings between the empirical outcome
//! distributions two policies produce on two populations, then reads
//! individual, subgroup and group bias off the coupling. Parity baselines
//! (disparate impact, demographic parity, equal opportunity) are provided for
//! comparison, and the coupling doubles as a recourse target through
//! barycentric projection.
//!
//! Module map:
//! - [`ot`]: discrete measures, cost matrices, exact and entropic solvers.
//! - [`policy`]: logistic policies, outcome measures, parity metrics.
//! - [`bias`]: coupling-derived individual and group bias, decomposition.
//! - [`recourse`]: projection, interpolation and alpha sweeps.
//! - [`ingest`]: CSV loading, encoding, partitions and splits.
//! - [`simulate`]: the two-school admissions simulation.
//! - [`audit`]: configuration-driven pipelines behind the CLI.

pub mod audit;
pub mod bias;
pub mod error;
pub mod ingest;
pub mod ot;
pub mod policy;
pub mod recourse;
pub mod simulate;

pub use bias::{BiasReport, Convention, FeatureMetric};
pub use error::{Error, Result};
pub use ingest::{Dataset, FeatureRole, Partition};
pub use policy::{OutcomeSet, ParityReport, Policy};
pub use recourse::RecourseResult;

pub use ot::{
    build_cost_matrix, solve, solve_entropic, solve_exact, wasserstein, CostMatrix, Coupling,
    DiscreteMeasure, GroundMetric, SolverConfig, SolverMethod,
};


