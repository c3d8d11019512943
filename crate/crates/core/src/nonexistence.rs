//! Truncation ladders for the attracting singular drift started at the
//! origin.
//!
//! Along the ladder `b · 1{|b| ≤ M}` with growing `M` two path statistics are
//! tracked: the singular cost `∫ t^{-α} |x_t|^{-β} dt` and the fraction of
//! time spent near the origin. Both grow without bound when no solution
//! exists in the limit.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{truncate, DiffusionSpec, DriftField, Orientation, SingularDrift};
use crate::sde_solver::{map_paths, PathSource, PathView, Simulation, SolverConfig};
use crate::stats::{bootstrap_quantile_se, mean_estimate, quantile, Estimate};

/// Default radius of the origin neighborhood.
pub const ORIGIN_RADIUS: f64 = 0.05;

/// Default floors guarding `|x|^{-β}`.
pub const DEFAULT_FLOORS: [f64; 2] = [0.01, 0.005];

const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationLadder {
    /// Strictly increasing positive levels `M`.
    pub levels: Vec<f64>,
    pub config: SolverConfig,
    pub drift: SingularDrift,
    #[serde(default = "origin_radius")]
    pub origin_radius: f64,
    #[serde(default = "default_floors")]
    pub floors: [f64; 2],
}

fn origin_radius() -> f64 {
    ORIGIN_RADIUS
}

fn default_floors() -> [f64; 2] {
    DEFAULT_FLOORS
}

impl TruncationLadder {
    /// A ladder started at the origin. At `t0 = 0` the first step's drift is
    /// taken at `t = dt`.
    pub fn new(levels: Vec<f64>, mut config: SolverConfig, drift: SingularDrift) -> Result<Self> {
        if config.t0 == 0.0 {
            config.left_limit_drift = true;
        }
        let l = Self {
            levels,
            config,
            drift,
            origin_radius: ORIGIN_RADIUS,
            floors: DEFAULT_FLOORS,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.drift.validate()?;
        if self.levels.is_empty() || self.levels.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(LabError::InvalidArgument(
                "ladder levels must be positive and finite".into(),
            ));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidArgument(
                "ladder levels must be strictly increasing".into(),
            ));
        }
        if self.config.x0.iter().any(|v| *v != 0.0) {
            return Err(LabError::InvalidArgument("the ladder starts at the origin".into()));
        }
        if !(self.config.t0 >= 0.0) {
            return Err(LabError::InvalidArgument("the ladder needs t0 >= 0".into()));
        }
        if !(self.origin_radius > 0.0) || self.floors.iter().any(|f| !(*f > 0.0)) {
            return Err(LabError::InvalidArgument("origin radius and floors must be > 0".into()));
        }
        Ok(())
    }

    /// The same ladder with the drift's sign flipped to `orientation`.
    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.drift = self.drift.with_orientation(orientation);
        self
    }

    /// Drift at level `M`; `M = 0` removes it.
    pub fn drift_at(&self, level: f64) -> DriftField {
        truncate(DriftField::Singular(self.drift), level)
    }
}

/// `∫_{t_k}^{t_{k+1}} (t0 + t)^{-α} dt` in left-endpoint form, except that a
/// cell starting at absolute time zero is integrated exactly.
fn time_weight(cfg: &SolverConfig, alpha: f64, k: usize) -> f64 {
    let dt = cfg.dt();
    let t = cfg.t0 + cfg.time(k);
    if t <= 0.0 {
        let hi = t + dt;
        if hi <= 0.0 {
            0.0
        } else {
            hi.powf(1.0 - alpha) / (1.0 - alpha)
        }
    } else {
        t.powf(-alpha) * dt
    }
}

fn path_cost(p: &PathView<'_>, s: &SingularDrift, floor: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..p.n_steps() {
        let r = p.state(k).iter().map(|v| v * v).sum::<f64>().sqrt();
        acc += time_weight(p.config, s.alpha, k) * r.max(floor).powf(-s.beta);
    }
    acc
}

/// Per-path `∫_0^T (t0 + t)^{-α} (|x_t| ∨ floor)^{-β} dt`.
pub fn singular_cost<S: PathSource + ?Sized>(src: &S, s: &SingularDrift, floor: f64) -> Result<Vec<f64>> {
    if !(floor > 0.0) {
        return Err(LabError::InvalidArgument(format!("floor must be > 0, got {floor}")));
    }
    map_paths(src, |p| Ok(path_cost(&p, s, floor)))
}

/// Fraction of `[0, T)` with `|x_t| < radius`.
fn path_occupancy(p: &PathView<'_>, radius: f64) -> f64 {
    let r2 = radius * radius;
    let n = p.n_steps();
    let inside = (0..n)
        .filter(|&k| p.state(k).iter().map(|v| v * v).sum::<f64>() < r2)
        .count();
    inside as f64 / n as f64
}

/// Fraction of steps `k ≥ 1` with `x_k = 0` exactly.
fn path_zero_occupancy(p: &PathView<'_>) -> f64 {
    let n = p.n_steps();
    let zeros = (1..=n).filter(|&k| p.state(k).iter().all(|v| *v == 0.0)).count();
    zeros as f64 / n as f64
}

/// Statistics of one ladder level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub floors: [f64; 2],
    pub median_cost: [f64; 2],
    pub p90_cost: [f64; 2],
    /// Bootstrap standard error of the median.
    pub median_se: [f64; 2],
    /// Mean fraction of time with `|x| < ρ`.
    pub origin_occupancy: Estimate,
    /// Mean fraction of time exactly at the origin.
    pub zero_occupancy: f64,
    pub n_paths: usize,
}

/// Simulates one level and summarizes it.
pub fn run_level(l: &TruncationLadder, level: f64, sigma: &DiffusionSpec) -> Result<LevelSummary> {
    let sim = Simulation::new(sigma.clone(), l.drift_at(level), l.config.clone())?;
    summarize(&sim, l, level)
}

fn summarize<S: PathSource + ?Sized>(src: &S, l: &TruncationLadder, level: f64) -> Result<LevelSummary> {
    let s = l.drift;
    let rows = map_paths(src, |p| {
        Ok([
            path_cost(&p, &s, l.floors[0]),
            path_cost(&p, &s, l.floors[1]),
            path_occupancy(&p, l.origin_radius),
            path_zero_occupancy(&p),
        ])
    })?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let costs = [col(0), col(1)];
    let seed = l.config.master_seed ^ level.to_bits();
    let zero = col(3);
    Ok(LevelSummary {
        level,
        floors: l.floors,
        median_cost: [quantile(&costs[0], 0.5), quantile(&costs[1], 0.5)],
        p90_cost: [quantile(&costs[0], 0.9), quantile(&costs[1], 0.9)],
        median_se: [
            bootstrap_quantile_se(&costs[0], 0.5, BOOTSTRAP_RESAMPLES, seed),
            bootstrap_quantile_se(&costs[1], 0.5, BOOTSTRAP_RESAMPLES, seed.wrapping_add(1)),
        ],
        origin_occupancy: mean_estimate(&col(2)),
        zero_occupancy: zero.iter().sum::<f64>() / zero.len() as f64,
        n_paths: rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    /// The drift-free run, `M = 0`.
    pub baseline: LevelSummary,
    pub levels: Vec<LevelSummary>,
    pub orientation: Orientation,
}

impl LadderReport {
    /// Median cost at the first floor, strictly increasing in `M`.
    pub fn cost_strictly_increasing(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].median_cost[0] > w[0].median_cost[0])
    }

    /// Spread `(max - min) / min` of the median cost over the levels.
    pub fn cost_variation(&self) -> f64 {
        let m: Vec<f64> = self.levels.iter().map(|s| s.median_cost[0]).collect();
        let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo
    }

    /// Occupancy at the top level over the drift-free occupancy.
    pub fn trapping_factor(&self) -> f64 {
        let top = self.levels.last().map_or(0.0, |s| s.origin_occupancy.value);
        top / self.baseline.origin_occupancy.value
    }
}

/// Runs the drift-free baseline and every level of the ladder.
pub fn ladder_experiment(l: &TruncationLadder) -> Result<LadderReport> {
    l.validate()?;
    let sigma = DiffusionSpec::identity();
    let baseline = run_level(l, 0.0, &sigma)?;
    let levels = l
        .levels
        .iter()
        .map(|&m| run_level(l, m, &sigma))
        .collect::<Result<Vec<_>>>()?;
    Ok(LadderReport {
        baseline,
        levels,
        orientation: l.drift.orientation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::DiffusionSpec;
    use crate::sde_solver::PathEnsemble;

    fn frozen(radius: f64, n_steps: usize) -> PathEnsemble {
        let cfg = SolverConfig::new(1.0, n_steps, 1, 0, vec![0.0, 0.0]);
        let mut states = Vec::new();
        for _ in 0..=n_steps {
            states.extend_from_slice(&[radius, 0.0]);
        }
        PathEnsemble {
            times: (0..=n_steps).map(|k| cfg.time(k)).collect(),
            increments: vec![0.0; 2 * n_steps],
            config: cfg,
            sigma: DiffusionSpec::identity(),
            drift: DriftField::Zero,
            states,
        }
    }

    #[test]
    fn frozen_path_costs() {
        let s = SingularDrift::new(0.5, 0.5).unwrap();
        let c = singular_cost(&frozen(1.0, 10_000), &s, 0.01).unwrap();
        assert!((c[0] - 2.0).abs() / 2.0 < 0.01, "{}", c[0]);
        let c = singular_cost(&frozen(0.01, 10_000), &s, 0.01).unwrap();
        assert!((c[0] - 20.0).abs() / 20.0 < 0.01, "{}", c[0]);
        let c = singular_cost(&frozen(0.0, 10_000), &s, 0.01).unwrap();
        assert!((c[0] - 20.0).abs() / 20.0 < 0.01, "{}", c[0]);
        assert!(singular_cost(&frozen(1.0, 10), &s, 0.0).is_err());
    }

    #[test]
    fn ladder_validation() {
        let s = SingularDrift::new(0.5, 0.5).unwrap();
        let cfg = SolverConfig::new(1.0, 100, 10, 1, vec![0.0, 0.0]);
        assert!(TruncationLadder::new(vec![10.0, 100.0], cfg.clone(), s).is_ok());
        assert!(TruncationLadder::new(vec![100.0, 10.0], cfg.clone(), s).is_err());
        assert!(TruncationLadder::new(vec![0.0, 10.0], cfg.clone(), s).is_err());
        let off = SolverConfig::new(1.0, 100, 10, 1, vec![0.1, 0.0]);
        assert!(TruncationLadder::new(vec![10.0], off, s).is_err());
        let l = TruncationLadder::new(vec![10.0], cfg, s).unwrap();
        assert!(l.config.left_limit_drift);
        assert_eq!(l.drift_at(0.0).magnitude(0.5, &[0.3, 0.0]), 0.0);
    }

    #[test]
    fn small_ladder_runs() {
        let s = SingularDrift::new(0.5, 0.5).unwrap();
        let cfg = SolverConfig::new(1.0, 1000, 200, 3, vec![0.0, 0.0]);
        let l = TruncationLadder::new(vec![10.0, 100.0], cfg, s).unwrap();
        let r = ladder_experiment(&l).unwrap();
        assert_eq!(r.levels.len(), 2);
        assert_eq!(r.baseline.zero_occupancy, 0.0);
        for lvl in &r.levels {
            // a lower floor can only raise the cost
            assert!(lvl.median_cost[1] >= lvl.median_cost[0]);
            assert!(lvl.p90_cost[0] >= lvl.median_cost[0]);
        }
    }
}
