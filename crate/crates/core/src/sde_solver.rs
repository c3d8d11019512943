//! Euler–Maruyama ensembles for `dx = σ(t0 + t, x) dw + b(t0 + t, x) dt`.
//!
//! Path `i` draws its normals from ChaCha8 stream `i` of the master seed, so
//! a path is a pure function of `(master_seed, i, config, coefficients)` and
//! the worker count never changes a result. Reductions run over fixed-size
//! blocks of paths whose partial results are combined in path order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{DiffusionSpec, DriftField, MAX_DIM};
use crate::stats::{jackknife_mean, mean_estimate, Estimate};

/// Paths per reduction block.
pub const PATH_BLOCK: usize = 128;

/// Relative tolerance, in units of `dt`, for matching a time to a grid node.
const NODE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Horizon `T` of the relative clock.
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Absolute start time `t0` fed to the coefficients.
    #[serde(default)]
    pub t0: f64,
    pub x0: Vec<f64>,
    /// Normals per step and coordinate; the increment over a step is the
    /// sum of `m` sub-increments. Ensembles with `(n, m)` and `(n·m, 1)`
    /// share their Brownian paths.
    #[serde(default = "one")]
    pub brownian_substeps: usize,
    /// Evaluate the first step's drift at `t0 + dt` instead of `t0`.
    #[serde(default)]
    pub left_limit_drift: bool,
}

fn one() -> usize {
    1
}

impl SolverConfig {
    pub fn new(horizon: f64, n_steps: usize, n_paths: usize, master_seed: u64, x0: Vec<f64>) -> Self {
        Self {
            horizon,
            n_steps,
            n_paths,
            master_seed,
            t0: 0.0,
            x0,
            brownian_substeps: 1,
            left_limit_drift: false,
        }
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_substeps(mut self, m: usize) -> Self {
        self.brownian_substeps = m;
        self
    }

    pub fn with_left_limit_drift(mut self, on: bool) -> Self {
        self.left_limit_drift = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Relative time of node `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Absolute time at which the drift of step `k` is evaluated.
    pub fn drift_time(&self, k: usize) -> f64 {
        if k == 0 && self.left_limit_drift {
            self.t0 + self.dt()
        } else {
            self.t0 + self.time(k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::InvalidConfig(msg));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive and finite, got {}", self.horizon));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be >= 1".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be >= 1".into());
        }
        if self.brownian_substeps == 0 {
            return bad("brownian_substeps must be >= 1".into());
        }
        if !self.t0.is_finite() || self.x0.iter().any(|v| !v.is_finite()) {
            return bad("start point must be finite".into());
        }
        if self.x0.is_empty() || self.x0.len() > MAX_DIM {
            return bad(format!("dimension {} outside 1..={MAX_DIM}", self.x0.len()));
        }
        Ok(())
    }

    /// Index of the node at relative time `t`.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let s = t / self.dt();
        let k = s.round();
        if !(k >= 0.0) || k > self.n_steps as f64 || (s - k).abs() > NODE_TOL * s.abs().max(1.0) {
            return Err(LabError::OffGrid(t));
        }
        Ok(k as usize)
    }
}

/// One stored or freshly simulated trajectory.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub index: usize,
    pub config: &'a SolverConfig,
    pub sigma: &'a DiffusionSpec,
    pub drift: &'a DriftField,
    /// `(n_steps + 1) × d`, row per node.
    pub states: &'a [f64],
    /// `n_steps × d` Brownian increments `ΔW_k`.
    pub increments: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    pub fn state(&self, k: usize) -> &'a [f64] {
        let d = self.dim();
        &self.states[k * d..(k + 1) * d]
    }

    pub fn increment(&self, k: usize) -> &'a [f64] {
        let d = self.dim();
        &self.increments[k * d..(k + 1) * d]
    }

    /// The drift used on step `k`, written into `out`.
    pub fn drift_at(&self, k: usize, out: &mut [f64]) {
        self.drift.eval(self.config.drift_time(k), self.state(k), out);
    }
}

/// Anything that can replay an ensemble path by path.
pub trait PathSource: Sync {
    fn config(&self) -> &SolverConfig;
    fn sigma(&self) -> &DiffusionSpec;
    fn drift(&self) -> &DriftField;

    /// Visits paths `start..end` in order.
    fn visit_range(&self, start: usize, end: usize, visit: &mut dyn FnMut(PathView<'_>) -> Result<()>) -> Result<()>;

    fn n_paths(&self) -> usize {
        self.config().n_paths
    }

    fn dim(&self) -> usize {
        self.config().dim()
    }
}

/// Folds each block of `block` paths sequentially and returns the block
/// accumulators in order. The first error in path order wins.
pub fn fold_blocks<S, A, I, F>(src: &S, block: usize, init: I, fold: F) -> Result<Vec<A>>
where
    S: PathSource + ?Sized,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, PathView<'_>) -> Result<()> + Sync,
{
    let n = src.n_paths();
    let block = block.max(1);
    let n_blocks = n.div_ceil(block);
    let results: Vec<Result<A>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let start = b * block;
            let end = (start + block).min(n);
            src.visit_range(start, end, &mut |view| fold(&mut acc, view))?;
            Ok(acc)
        })
        .collect();
    results.into_iter().collect()
}

/// `f` applied to every path, in path order.
pub fn map_paths<S, T, F>(src: &S, f: F) -> Result<Vec<T>>
where
    S: PathSource + ?Sized,
    T: Send,
    F: Fn(PathView<'_>) -> Result<T> + Sync,
{
    let blocks = fold_blocks(src, PATH_BLOCK, Vec::new, |acc: &mut Vec<T>, view| {
        acc.push(f(view)?);
        Ok(())
    })?;
    Ok(blocks.into_iter().flatten().collect())
}

/// A stored ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub config: SolverConfig,
    pub sigma: DiffusionSpec,
    pub drift: DriftField,
    /// Relative node times `k·dt`.
    pub times: Vec<f64>,
    /// `n_paths × (n_steps + 1) × d`.
    pub states: Vec<f64>,
    /// `n_paths × n_steps × d`.
    pub increments: Vec<f64>,
}

impl PathEnsemble {
    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn n_paths(&self) -> usize {
        self.config.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    fn path_len(&self) -> usize {
        (self.n_steps() + 1) * self.dim()
    }

    pub fn path(&self, i: usize) -> PathView<'_> {
        let sl = self.path_len();
        let il = self.n_steps() * self.dim();
        PathView {
            index: i,
            config: &self.config,
            sigma: &self.sigma,
            drift: &self.drift,
            states: &self.states[i * sl..(i + 1) * sl],
            increments: &self.increments[i * il..(i + 1) * il],
        }
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let d = self.dim();
        let at = path * self.path_len() + step * d;
        &self.states[at..at + d]
    }
}

impl PathSource for PathEnsemble {
    fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn sigma(&self) -> &DiffusionSpec {
        &self.sigma
    }

    fn drift(&self) -> &DriftField {
        &self.drift
    }

    fn visit_range(&self, start: usize, end: usize, visit: &mut dyn FnMut(PathView<'_>) -> Result<()>) -> Result<()> {
        (start..end).try_for_each(|i| visit(self.path(i)))
    }
}

/// An ensemble that is re-simulated on every pass instead of stored.
///
/// Gives the same paths as [`simulate`] with the same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub config: SolverConfig,
    pub sigma: DiffusionSpec,
    pub drift: DriftField,
}

impl Simulation {
    pub fn new(sigma: DiffusionSpec, drift: DriftField, config: SolverConfig) -> Result<Self> {
        validate_inputs(&sigma, &drift, &config)?;
        Ok(Self { config, sigma, drift })
    }

    /// Materializes the ensemble.
    pub fn run(&self) -> Result<PathEnsemble> {
        simulate(&self.sigma, &self.drift, &self.config)
    }
}

impl PathSource for Simulation {
    fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn sigma(&self) -> &DiffusionSpec {
        &self.sigma
    }

    fn drift(&self) -> &DriftField {
        &self.drift
    }

    fn visit_range(&self, start: usize, end: usize, visit: &mut dyn FnMut(PathView<'_>) -> Result<()>) -> Result<()> {
        let d = self.config.dim();
        let n = self.config.n_steps;
        let mut states = vec![0.0; (n + 1) * d];
        let mut increments = vec![0.0; n * d];
        for i in start..end {
            simulate_path(i, &self.config, &self.sigma, &self.drift, &mut states, &mut increments)?;
            visit(PathView {
                index: i,
                config: &self.config,
                sigma: &self.sigma,
                drift: &self.drift,
                states: &states,
                increments: &increments,
            })?;
        }
        Ok(())
    }
}

fn validate_inputs(sigma: &DiffusionSpec, drift: &DriftField, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    let d = cfg.dim();
    sigma.validate(d)?;
    drift.validate(d)
}

/// The random stream of path `index`.
pub fn path_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulates path `index` into the given buffers.
pub fn simulate_path(
    index: usize,
    cfg: &SolverConfig,
    sigma: &DiffusionSpec,
    drift: &DriftField,
    states: &mut [f64],
    increments: &mut [f64],
) -> Result<()> {
    let d = cfg.dim();
    let dt = cfg.dt();
    let m = cfg.brownian_substeps;
    let sub_scale = (dt / m as f64).sqrt();
    let mut rng = path_rng(cfg.master_seed, index);
    states[..d].copy_from_slice(&cfg.x0);
    let mut b = [0.0; MAX_DIM];
    let mut noise = [0.0; MAX_DIM];
    for k in 0..cfg.n_steps {
        let dw = &mut increments[k * d..(k + 1) * d];
        dw.iter_mut().for_each(|w| *w = 0.0);
        for _ in 0..m {
            for w in dw.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *w += z;
            }
        }
        dw.iter_mut().for_each(|w| *w *= sub_scale);
        let (head, tail) = states.split_at_mut((k + 1) * d);
        let x = &head[k * d..];
        let t = cfg.t0 + cfg.time(k);
        drift.eval(cfg.drift_time(k), x, &mut b[..d]);
        sigma.apply(t, x, dw, &mut noise[..d]);
        let next = &mut tail[..d];
        let mut finite = true;
        for i in 0..d {
            next[i] = x[i] + noise[i] + b[i] * dt;
            finite &= next[i].is_finite() && b[i].is_finite() && noise[i].is_finite();
        }
        if !finite {
            return Err(LabError::NonFinite {
                path: index,
                step: k,
                t,
                x: x.to_vec(),
            });
        }
    }
    Ok(())
}

/// Runs the Euler–Maruyama scheme on every path and stores the result.
pub fn simulate(sigma: &DiffusionSpec, b: &DriftField, cfg: &SolverConfig) -> Result<PathEnsemble> {
    validate_inputs(sigma, b, cfg)?;
    let d = cfg.dim();
    let n = cfg.n_steps;
    let sl = (n + 1) * d;
    let il = n * d;
    let mut states = vec![0.0; cfg.n_paths * sl];
    let mut increments = vec![0.0; cfg.n_paths * il];
    let results: Vec<Result<()>> = states
        .par_chunks_mut(sl)
        .zip(increments.par_chunks_mut(il.max(1)))
        .enumerate()
        .map(|(i, (s, w))| simulate_path(i, cfg, sigma, b, s, w))
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(PathEnsemble {
        config: cfg.clone(),
        sigma: sigma.clone(),
        drift: b.clone(),
        times: (0..=n).map(|k| cfg.time(k)).collect(),
        states,
        increments,
    })
}

/// `E|x_t - x_s|^n` with its jackknife standard error.
pub fn increment_moment<S: PathSource + ?Sized>(src: &S, n: u32, s: f64, t: f64) -> Result<Estimate> {
    if n == 0 || n % 2 != 0 {
        return Err(LabError::InvalidArgument(format!("moment order must be even, got {n}")));
    }
    let cfg = src.config();
    let ks = cfg.node_index(s)?;
    let kt = cfg.node_index(t)?;
    if ks > kt {
        return Err(LabError::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if ks == kt {
        return Ok(Estimate::exact(0.0, src.n_paths()));
    }
    let values = map_paths(src, |p| {
        let r2: f64 = p
            .state(kt)
            .iter()
            .zip(p.state(ks))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(r2.powi(n as i32 / 2))
    })?;
    Ok(jackknife_mean(&values))
}

/// `E|x_t - x_s|^n` for several `(s, t)` pairs in one pass over the paths.
///
/// Pairs with `s = t` give an exact zero.
pub fn increment_moments<S: PathSource + ?Sized>(src: &S, n: u32, pairs: &[(f64, f64)]) -> Result<Vec<Estimate>> {
    if n == 0 || n % 2 != 0 {
        return Err(LabError::InvalidArgument(format!("moment order must be even, got {n}")));
    }
    let cfg = src.config();
    let nodes: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(s, t)| {
            let (ks, kt) = (cfg.node_index(s)?, cfg.node_index(t)?);
            if ks > kt {
                return Err(LabError::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
            }
            Ok((ks, kt))
        })
        .collect::<Result<_>>()?;
    let per_path = map_paths(src, |p| {
        Ok(nodes
            .iter()
            .map(|&(ks, kt)| {
                let r2: f64 = p
                    .state(kt)
                    .iter()
                    .zip(p.state(ks))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                r2.powi(n as i32 / 2)
            })
            .collect::<Vec<_>>())
    })?;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(j, &(ks, kt))| {
            if ks == kt {
                Estimate::exact(0.0, per_path.len())
            } else {
                let col: Vec<f64> = per_path.iter().map(|row| row[j]).collect();
                jackknife_mean(&col)
            }
        })
        .collect())
}

/// Samples of `x_t` at a list of node times.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub times: Vec<f64>,
    pub dim: usize,
    /// Per time, `n_paths × d` in path order.
    pub values: Vec<Vec<f64>>,
}

impl Marginals {
    pub fn collect<S: PathSource + ?Sized>(src: &S, times: &[f64]) -> Result<Self> {
        let cfg = src.config();
        let nodes: Vec<usize> = times.iter().map(|&t| cfg.node_index(t)).collect::<Result<_>>()?;
        let per_path = map_paths(src, |p| {
            Ok(nodes.iter().map(|&k| p.state(k).to_vec()).collect::<Vec<_>>())
        })?;
        let values = (0..nodes.len())
            .map(|j| per_path.iter().flat_map(|row| row[j].iter().copied()).collect())
            .collect();
        Ok(Self {
            times: times.to_vec(),
            dim: src.dim(),
            values,
        })
    }

    /// Samples of coordinate `i` at time index `j`.
    pub fn coordinate(&self, j: usize, i: usize) -> Vec<f64> {
        self.values[j].iter().skip(i).step_by(self.dim).copied().collect()
    }

    /// Sum over coordinates of the 1-Wasserstein distance at time index `j`.
    pub fn distance(&self, other: &Marginals, j: usize) -> Result<f64> {
        if self.dim != other.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok((0..self.dim)
            .map(|i| wasserstein_1d(&self.coordinate(j, i), &other.coordinate(j, i)))
            .sum())
    }
}

/// Coordinate-wise sum of 1-Wasserstein distances between the empirical
/// marginals of two ensembles at node time `t`.
pub fn marginal_distance<A, B>(a: &A, b: &B, t: f64) -> Result<f64>
where
    A: PathSource + ?Sized,
    B: PathSource + ?Sized,
{
    if a.dim() != b.dim() {
        return Err(LabError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let ma = Marginals::collect(a, &[t])?;
    let mb = Marginals::collect(b, &[t])?;
    ma.distance(&mb, 0)
}

/// `∫ |F_a - F_b| dx` for two empirical distributions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { f64::INFINITY };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut acc = 0.0;
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        acc += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    acc
}

/// Itô-formula residual for `g(x) = (|x|² + ε)^{(1+β)/2}`.
///
/// For each path computes `g(x_T) - g(x_0)` minus the Euler sums of the
/// drift, second-order and stochastic terms, with the drift taken from the
/// ensemble itself. The mean is zero up to the scheme's weak error.
pub fn ito_residual<S: PathSource + ?Sized>(src: &S, eps: f64, beta: f64) -> Result<Estimate> {
    Ok(mean_estimate(&ito_residual_samples(src, eps, beta)?))
}

/// Per-path residuals behind [`ito_residual`].
pub fn ito_residual_samples<S: PathSource + ?Sized>(src: &S, eps: f64, beta: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(LabError::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    if !src.sigma().is_identity() {
        return Err(LabError::InvalidArgument("the residual assumes sigma = I".into()));
    }
    let gexp = 0.5 * (1.0 + beta);
    let dexp = 0.5 * (beta - 1.0);
    map_paths(src, |p| {
        let d = p.dim();
        let dt = p.config.dt();
        let g = |x: &[f64]| (norm2(x) + eps).powf(gexp);
        let mut b = [0.0; MAX_DIM];
        let mut det = 0.0;
        let mut mart = 0.0;
        for k in 0..p.n_steps() {
            let x = p.state(k);
            let xi = norm2(x);
            let u = xi + eps;
            let w = u.powf(dexp);
            p.drift_at(k, &mut b[..d]);
            let xb: f64 = x.iter().zip(&b[..d]).map(|(a, c)| a * c).sum();
            let xdw: f64 = x.iter().zip(p.increment(k)).map(|(a, c)| a * c).sum();
            let i_term = (1.0 + beta) * w * xb;
            let j_term = gexp * (d as f64 + (beta - 1.0) * xi / u) * w;
            det += (i_term + j_term) * dt;
            mart += (1.0 + beta) * w * xdw;
        }
        Ok(g(p.state(p.n_steps())) - g(p.state(0)) - det - mart)
    })
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(n_paths: usize, n_steps: usize, seed: u64) -> PathEnsemble {
        let cfg = SolverConfig::new(1.0, n_steps, n_paths, seed, vec![0.0, 0.0]);
        simulate(&DiffusionSpec::identity(), &DriftField::Zero, &cfg).unwrap()
    }

    #[test]
    fn starts_at_x0_and_is_reproducible() {
        let a = bm(50, 20, 7);
        let b = bm(50, 20, 7);
        assert_eq!(a, b);
        for i in 0..50 {
            assert_eq!(a.state(i, 0), &[0.0, 0.0]);
        }
        assert_ne!(a.states, bm(50, 20, 8).states);
    }

    #[test]
    fn stream_matches_stored() {
        let cfg = SolverConfig::new(1.0, 30, 300, 3, vec![0.1, 0.2]);
        let drift = DriftField::Linear { coef: -1.0 };
        let sim = Simulation::new(DiffusionSpec::identity(), drift, cfg).unwrap();
        let ens = sim.run().unwrap();
        let from_stream = map_paths(&sim, |p| Ok(p.states.to_vec())).unwrap();
        let from_store = map_paths(&ens, |p| Ok(p.states.to_vec())).unwrap();
        assert_eq!(from_stream, from_store);
    }

    #[test]
    fn substeps_couple_brownian_paths() {
        let fine = SolverConfig::new(1.0, 40, 5, 11, vec![0.0, 0.0]);
        let coarse = SolverConfig::new(1.0, 20, 5, 11, vec![0.0, 0.0]).with_substeps(2);
        let a = simulate(&DiffusionSpec::identity(), &DriftField::Zero, &fine).unwrap();
        let b = simulate(&DiffusionSpec::identity(), &DriftField::Zero, &coarse).unwrap();
        for i in 0..5 {
            for k in 0..=20 {
                let (u, v) = (a.state(i, 2 * k), b.state(i, k));
                for j in 0..2 {
                    assert!((u[j] - v[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn non_finite_drift_aborts_with_context() {
        let cfg = SolverConfig::new(1.0, 10, 4, 1, vec![0.0, 0.0]);
        let drift = DriftField::Constant {
            value: vec![f64::INFINITY, 0.0],
        };
        // validation rejects the constant, so go through the path routine
        let mut s = vec![0.0; 22];
        let mut w = vec![0.0; 20];
        let err = simulate_path(2, &cfg, &DiffusionSpec::identity(), &drift, &mut s, &mut w).unwrap_err();
        assert_eq!(
            err,
            LabError::NonFinite {
                path: 2,
                step: 0,
                t: 0.0,
                x: vec![0.0, 0.0]
            }
        );
        assert!(simulate(&DiffusionSpec::identity(), &drift, &cfg).is_err());
    }

    #[test]
    fn brownian_moments() {
        let ens = bm(10_000, 100, 42);
        let m2 = increment_moment(&ens, 2, 0.0, 1.0).unwrap();
        assert!(m2.within(2.0, 3.0), "{m2:?}");
        let m4 = increment_moment(&ens, 4, 0.0, 1.0).unwrap();
        assert!(m4.within(8.0, 3.0), "{m4:?}");
        let z = increment_moment(&ens, 2, 0.5, 0.5).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(increment_moment(&ens, 2, 0.0, 0.505).is_err());
        assert!(increment_moment(&ens, 3, 0.0, 1.0).is_err());
    }

    #[test]
    fn constant_drift_mean() {
        let cfg = SolverConfig::new(1.0, 50, 10_000, 5, vec![0.0, 0.0]);
        let drift = DriftField::Constant { value: vec![1.0, 0.0] };
        let ens = simulate(&DiffusionSpec::identity(), &drift, &cfg).unwrap();
        for (j, target) in [1.0, 0.0].into_iter().enumerate() {
            let xs: Vec<f64> = (0..ens.n_paths()).map(|i| ens.state(i, 50)[j]).collect();
            assert!(mean_estimate(&xs).within(target, 3.0));
        }
    }

    #[test]
    fn wasserstein_basics() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]), 0.0);
        assert!((wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        // point mass at 0 against uniform two-point {0, 1}
        assert!((wasserstein_1d(&[0.0], &[0.0, 1.0]) - 0.5).abs() < 1e-15);
        let a = bm(200, 10, 1);
        assert_eq!(marginal_distance(&a, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn residual_rejects_bad_inputs() {
        let ens = bm(10, 10, 1);
        assert!(ito_residual(&ens, 0.0, 0.5).is_err());
        let cfg = SolverConfig::new(1.0, 10, 10, 1, vec![0.0, 0.0]);
        let sigma = DiffusionSpec::new(0.5, crate::fields::DiffusionMatrix::Scalar { scale: 1.5 }).unwrap();
        let other = simulate(&sigma, &DriftField::Zero, &cfg).unwrap();
        assert!(ito_residual(&other, 0.1, 0.5).is_err());
    }

    #[test]
    fn pure_diffusion_residual_is_centered() {
        let ens = bm(10_000, 400, 9);
        let r = ito_residual(&ens, 1.0, 0.5).unwrap();
        assert!(r.value.abs() <= 3.0 * r.standard_error + 0.01, "{r:?}");
    }
}
