//! Numerical laboratory for Itô equations with drift in mixed Lebesgue
//! spaces `L_{p,q}`.
//!
//! The crate computes mixed norms of space-time fields, simulates
//! Euler–Maruyama ensembles with truncated or mollified coefficients, and
//! estimates occupation functionals, Green densities and moment bounds by
//! Monte Carlo.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod mixed_norm;
pub mod nonexistence;
pub mod occupation;
pub mod quadrature;
pub mod sde_solver;
pub mod stats;
pub mod tightness;

pub use error::{LabError, Result};
pub use fields::{
    eval_singular_drift, mollify, truncate, validate_diffusion, DiffusionMatrix, DiffusionSpec, DriftField,
    Orientation, ScalarField, SingularDrift,
};
pub use mixed_norm::{
    compute_mixed_norm, drift_mass, subcriticality, GridField, MixedExponents, Regime, SpaceTimeGrid,
};
pub use nonexistence::{ladder_experiment, singular_cost, LadderReport, LevelSummary, TruncationLadder};
pub use occupation::{
    drift_budget_check, estimate_ab, estimate_occupation, green_density, weighted_functional, EstimateReport, Horizon,
    Rate, SemimartingaleWeights,
};
pub use sde_solver::{
    increment_moment, ito_residual, marginal_distance, simulate, PathEnsemble, PathSource, PathView, Simulation,
    SolverConfig,
};
pub use stats::Estimate;
pub use tightness::{
    build_time_change, convergence_diagnostic, moment_bound_check, Coefficients, ConvergenceTable, MomentReport,
    TimeChange,
};
