//! Fixtures shared by the benchmarks.

use lpq_core::{DriftField, GridField, ScalarField, SingularDrift, SolverConfig, SpaceTimeGrid};

/// The singular drift with `α = 1/3`, `β = 2/3`, truncated at `level`.
pub fn truncated_singular(level: f64) -> DriftField {
    lpq_core::truncate(
        DriftField::Singular(SingularDrift::new(1.0 / 3.0, 2.0 / 3.0).expect("valid exponents")),
        level,
    )
}

/// Planar ensemble on `[0, 1]` started at `(0.5, 0)` from `t0 = 0.05`.
pub fn planar_config(n_steps: usize, n_paths: usize) -> SolverConfig {
    SolverConfig::new(1.0, n_steps, n_paths, 7, vec![0.5, 0.0]).with_t0(0.05)
}

/// A Gaussian sampled on an `n_t × n_x^d` grid over `[0, 1] × [-3, 3]^d`.
pub fn gaussian_grid(n_t: usize, n_x: usize, dim: usize) -> GridField {
    let grid = SpaceTimeGrid::new(0.0, 1.0, n_t, 3.0, n_x, dim).expect("valid grid");
    let f = ScalarField::Gaussian {
        amplitude: 1.0,
        width: 0.5,
        center: vec![0.0; dim],
        t_start: 0.0,
        t_end: 1.0,
    };
    GridField::from_scalar(grid, &f).expect("finite samples")
}
