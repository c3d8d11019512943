//! Time change `ψ(t) = t + B(t0 + t)²`, fitted moment bounds and marginal
//! convergence tables for coefficient sequences.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{DiffusionSpec, DriftField};
use crate::mixed_norm::{drift_mass, drift_mass_on_grid, MixedExponents, SpaceTimeGrid};
use crate::sde_solver::{increment_moments, Marginals, PathSource, Simulation, SolverConfig};
use crate::stats::Estimate;

/// Tabulated `B`, `ψ` and the inverse of `ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    pub t0: f64,
    /// Relative times, strictly increasing.
    pub nodes: Vec<f64>,
    /// `B(t0 + t)` at the nodes.
    pub mass: Vec<f64>,
    /// `ψ(t) = t + B(t0 + t)²` at the nodes.
    pub psi: Vec<f64>,
}

impl TimeChange {
    fn from_mass(t0: f64, nodes: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        let psi: Vec<f64> = nodes.iter().zip(&mass).map(|(t, b)| t + b * b).collect();
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidField("drift mass is infinite on the grid".into()));
        }
        if psi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidField("psi is not strictly increasing".into()));
        }
        Ok(Self { t0, nodes, mass, psi })
    }

    /// `B(t0 + t)` by linear interpolation.
    pub fn mass_at(&self, t: f64) -> f64 {
        interpolate(&self.nodes, &self.mass, t)
    }

    pub fn psi_at(&self, t: f64) -> f64 {
        interpolate(&self.nodes, &self.psi, t)
    }

    /// `ψ^{-1}(s)` by linear interpolation.
    pub fn inverse(&self, s: f64) -> f64 {
        interpolate(&self.psi, &self.nodes, s)
    }

    /// `B²(t) - B²(s) ≥ (B(t) - B(s))²` over all tabulated pairs.
    pub fn square_increments_dominate(&self) -> bool {
        let m = &self.mass;
        (0..m.len()).all(|j| {
            (0..=j).all(|i| {
                let lhs = m[j] * m[j] - m[i] * m[i];
                let rhs = (m[j] - m[i]) * (m[j] - m[i]);
                lhs >= rhs - 1e-12 * lhs.abs().max(1.0)
            })
        })
    }
}

/// Piecewise-linear interpolation on increasing `xs`, clamped at the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|v| *v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    if x == x0 {
        return ys[j - 1];
    }
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

/// Tabulates `ψ` from the closed-form drift mass.
pub fn build_time_change(b: &DriftField, e: &MixedExponents, t0: f64, nodes: &[f64]) -> Result<TimeChange> {
    if nodes.len() < 2 || nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidArgument(
            "time nodes must be strictly increasing".into(),
        ));
    }
    let mass = nodes
        .iter()
        .map(|&t| drift_mass(b, e, t0 + t))
        .collect::<Result<Vec<_>>>()?;
    TimeChange::from_mass(t0, nodes.to_vec(), mass)
}

/// Tabulates `ψ` from grid samples of `|b|`, at the grid's time edges.
/// The start time is `grid.t_min`.
pub fn build_time_change_on_grid(b: &DriftField, e: &MixedExponents, grid: &SpaceTimeGrid) -> Result<TimeChange> {
    let mass = drift_mass_on_grid(b, e, grid)?;
    let dt = grid.dt();
    let nodes = (0..=grid.n_t).map(|k| k as f64 * dt).collect();
    TimeChange::from_mass(grid.t_min, nodes, mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub s: f64,
    pub t: f64,
    pub moment: Estimate,
    /// `(t - s) + B²(t0 + t) - B²(t0 + s)`.
    pub delta: f64,
    /// `N̂ · Δ^{nd/(2p)}`.
    pub bound: f64,
    pub calibration: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: u32,
    pub exponent: f64,
    /// Largest calibration ratio `moment / Δ^e`.
    pub n_hat: f64,
    pub rows: Vec<MomentRow>,
    pub held_out_violations: usize,
}

/// Fits `E|x_t - x_s|^n ≤ N (Δ)^{nd/(2p)}` on the even-indexed pairs and
/// checks the odd-indexed ones at 3 standard errors.
pub fn moment_bound_check<S: PathSource + ?Sized>(
    src: &S,
    tc: &TimeChange,
    e: &MixedExponents,
    n: u32,
    pairs: &[(f64, f64)],
) -> Result<MomentReport> {
    e.validate()?;
    if e.p < e.q {
        return Err(LabError::WrongBranch { p: e.p, q: e.q });
    }
    if pairs.is_empty() {
        return Err(LabError::InvalidArgument("no (s, t) pairs given".into()));
    }
    if let Some(&(s, t)) = pairs.iter().find(|(s, t)| !(s <= t) || t - s >= 1.0 || *s < 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "pairs need 0 <= s <= t < s + 1, got ({s}, {t})"
        )));
    }
    let exponent = n as f64 * e.d as f64 / (2.0 * e.p);
    let moments = increment_moments(src, n, pairs)?;
    let delta = |s: f64, t: f64| {
        let (bs, bt) = (tc.mass_at(s), tc.mass_at(t));
        (t - s) + bt * bt - bs * bs
    };
    let n_hat = pairs
        .iter()
        .zip(&moments)
        .enumerate()
        .filter(|(i, ((s, t), _))| i % 2 == 0 && s < t)
        .map(|(_, ((s, t), m))| m.value / delta(*s, *t).powf(exponent))
        .fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(pairs.len());
    let mut held_out_violations = 0;
    for (i, (&(s, t), m)) in pairs.iter().zip(&moments).enumerate() {
        let dl = delta(s, t);
        let bound = if s < t { n_hat * dl.powf(exponent) } else { 0.0 };
        let calibration = i % 2 == 0;
        let violated = !calibration && s < t && m.value - 3.0 * m.standard_error > bound;
        held_out_violations += violated as usize;
        rows.push(MomentRow {
            s,
            t,
            moment: *m,
            delta: dl,
            bound,
            calibration,
            violated,
        });
    }
    Ok(MomentReport {
        order: n,
        exponent,
        n_hat,
        rows,
        held_out_violations,
    })
}

/// Coefficients and start point of one equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub sigma: DiffusionSpec,
    pub drift: DriftField,
    pub t0: f64,
    pub x0: Vec<f64>,
}

impl Coefficients {
    fn simulation(&self, base: &SolverConfig, seed: u64) -> Result<Simulation> {
        let mut cfg = base.clone();
        cfg.t0 = self.t0;
        cfg.x0 = self.x0.clone();
        cfg.master_seed = seed;
        Simulation::new(self.sigma.clone(), self.drift.clone(), cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub time: f64,
    pub to_limit: f64,
    /// Distance to element `n - 1`; `None` for the first element.
    pub to_previous: Option<f64>,
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub times: Vec<f64>,
    /// Distance between two independent limit ensembles, per time.
    pub noise_floor: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn row(&self, n: usize, time_index: usize) -> &ConvergenceRow {
        &self.rows[n * self.times.len() + time_index]
    }
}

/// Marginal distances of a coefficient sequence to its limit.
///
/// Every element and the limit share `base.master_seed`, so the distances
/// measure the coefficients rather than sampling noise; the noise floor
/// compares the limit against itself under `noise_seed`.
pub fn convergence_diagnostic(
    seq: &[Coefficients],
    limit: &Coefficients,
    base: &SolverConfig,
    times: &[f64],
    noise_seed: u64,
) -> Result<ConvergenceTable> {
    if times.is_empty() {
        return Err(LabError::InvalidArgument("no diagnostic times given".into()));
    }
    let reference = Marginals::collect(&limit.simulation(base, base.master_seed)?, times)?;
    let independent = Marginals::collect(&limit.simulation(base, noise_seed)?, times)?;
    let noise_floor = (0..times.len())
        .map(|j| reference.distance(&independent, j))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(seq.len() * times.len());
    let mut previous: Option<Marginals> = None;
    for (n, c) in seq.iter().enumerate() {
        let m = Marginals::collect(&c.simulation(base, base.master_seed)?, times)?;
        for (j, &time) in times.iter().enumerate() {
            rows.push(ConvergenceRow {
                n,
                time,
                to_limit: m.distance(&reference, j)?,
                to_previous: previous.as_ref().map(|p| m.distance(p, j)).transpose()?,
                noise_floor: noise_floor[j],
            });
        }
        previous = Some(m);
    }
    Ok(ConvergenceTable {
        times: times.to_vec(),
        noise_floor,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SingularDrift;
    use crate::sde_solver::simulate;
    use std::f64::consts::PI;

    fn nodes(n: usize) -> Vec<f64> {
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }

    #[test]
    fn zero_drift_gives_identity() {
        let e = MixedExponents::new(3.0, 3.0, 2).unwrap();
        let tc = build_time_change(&DriftField::Zero, &e, 0.0, &nodes(10)).unwrap();
        for (t, s) in tc.nodes.iter().zip(&tc.psi) {
            assert_eq!(t, s);
        }
        assert_eq!(tc.inverse(0.37), 0.37);
    }

    #[test]
    fn example_psi_at_one() {
        let e = MixedExponents::new(2.5, 2.5, 2).unwrap();
        let b = DriftField::Singular(SingularDrift::new(1.0 / 3.0, 2.0 / 3.0).unwrap());
        let tc = build_time_change(&b, &e, 0.0, &nodes(50)).unwrap();
        let expected = 1.0 + (36.0 * PI).powi(2);
        assert!((tc.psi_at(1.0) - expected).abs() / expected < 1e-10);
        assert!((expected - 12792.007).abs() < 1e-3);
        for (t, s) in tc.nodes.iter().zip(&tc.psi) {
            assert!((tc.inverse(*s) - t).abs() < 1e-8);
        }
        assert!(tc.square_increments_dominate());
    }

    #[test]
    fn bounded_cylinder_profile() {
        let e = MixedExponents::new(3.0, 3.0, 2).unwrap();
        let b = DriftField::Cylinder {
            value: vec![1.0, 0.0],
            radius: 1.0,
            t_start: 0.0,
            t_end: 1.0,
        };
        let tc = build_time_change(&b, &e, 0.0, &nodes(8)).unwrap();
        for (t, s) in tc.nodes.iter().zip(&tc.psi) {
            let c = PI;
            assert!((s - (t + (c * t).powi(2))).abs() < 1e-12);
        }
        assert!(matches!(
            build_time_change(&b, &MixedExponents::new(2.0, 3.0, 2).unwrap(), 0.0, &nodes(8)),
            Err(LabError::WrongBranch { .. })
        ));
    }

    #[test]
    fn brownian_moment_bound() {
        let cfg = SolverConfig::new(1.0, 100, 4000, 17, vec![0.0, 0.0]);
        let ens = simulate(&DiffusionSpec::identity(), &DriftField::Zero, &cfg).unwrap();
        let e = MixedExponents::new(2.5, 2.5, 2).unwrap();
        let tc = build_time_change(&DriftField::Zero, &e, 0.0, &nodes(100)).unwrap();
        let pairs: Vec<(f64, f64)> = (0..10)
            .map(|i| (0.0, 0.1 * (i + 1) as f64 - 0.01))
            .chain([(0.5, 0.5)])
            .collect();
        let r = moment_bound_check(&ens, &tc, &e, 2, &pairs).unwrap();
        assert_eq!(r.held_out_violations, 0);
        assert!((r.exponent - 0.8).abs() < 1e-15);
        assert!(r.n_hat > 1.5 && r.n_hat < 2.5, "{}", r.n_hat);
        assert!(moment_bound_check(&ens, &tc, &e, 2, &[]).is_err());
    }

    #[test]
    fn identity_sequence_has_zero_distance() {
        let base = SolverConfig::new(1.0, 50, 500, 5, vec![0.0, 0.0]);
        let c = Coefficients {
            sigma: DiffusionSpec::identity(),
            drift: DriftField::Linear { coef: -1.0 },
            t0: 0.0,
            x0: vec![0.0, 0.0],
        };
        let table = convergence_diagnostic(&[c.clone(), c.clone()], &c, &base, &[0.5, 1.0], 99).unwrap();
        for row in &table.rows {
            assert_eq!(row.to_limit, 0.0);
            assert!(row.noise_floor > 0.0);
        }
        assert_eq!(table.row(1, 0).to_previous, Some(0.0));
    }
}
