//! Monte Carlo occupation functionals along simulated paths.
//!
//! All time integrals are left-endpoint sums over the solver grid. Test
//! functions are evaluated on the coefficients' clock: the sample at step `k`
//! sits at absolute time `t0 + τ_k` (`t0 + t_k` for plain occupation), which
//! is the usual `(τ_t, x_t)` whenever the ensemble starts at `t0 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{ScalarField, MAX_DIM};
use crate::mixed_norm::{
    analytic_scalar_norm, compute_mixed_norm_ordered, GridField, MixedExponents, Regime, SpaceTimeGrid,
};
use crate::sde_solver::{fold_blocks, map_paths, PathSource, PathView, PATH_BLOCK};
use crate::stats::{mean_estimate, pairwise_sum, Estimate};

/// A Monte Carlo value next to the bound it is compared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub label: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub n_paths: usize,
    pub bound_value: Option<f64>,
    pub bound_label: String,
}

impl EstimateReport {
    fn new(label: &str, e: Estimate) -> Self {
        Self {
            label: label.into(),
            estimate: e.value,
            standard_error: e.standard_error,
            n_paths: e.samples,
            bound_value: None,
            bound_label: String::new(),
        }
    }

    pub fn as_estimate(&self) -> Estimate {
        Estimate {
            value: self.estimate,
            standard_error: self.standard_error,
            samples: self.n_paths,
        }
    }

    /// `estimate / bound`, the fitted constant.
    pub fn ratio(&self) -> Option<f64> {
        self.bound_value.map(|b| self.estimate / b)
    }
}

/// Where a path's functional stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    /// `γ = T`, a node of the solver grid.
    Fixed { time: f64 },
    /// First node with `|x| ≥ radius`, capped at `cap`.
    FirstExit { radius: f64, cap: f64 },
}

/// A nonnegative rate process (`r_t` or `c_t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rate {
    Constant {
        value: f64,
    },
    /// `λ · tr a_t`.
    TraceScaled {
        lambda: f64,
    },
}

impl Rate {
    pub fn is_zero(&self) -> bool {
        matches!(self, Rate::Constant { value } if *value == 0.0)
            || matches!(self, Rate::TraceScaled { lambda } if *lambda == 0.0)
    }

    fn at(&self, trace_a: f64) -> f64 {
        match self {
            Rate::Constant { value } => *value,
            Rate::TraceScaled { lambda } => lambda * trace_a,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let v = match self {
            Rate::Constant { value } => *value,
            Rate::TraceScaled { lambda } => *lambda,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(LabError::InvalidArgument(format!(
                "{what} must be finite and >= 0, got {v}"
            )))
        }
    }
}

/// The processes `A_t = clock_rate · t`, `r_t`, `c_t` and the horizon `γ`.
///
/// With martingale part `∫σ dw` and `dA = clock_rate · dt` the diffusion
/// matrix is `a = σσᵀ / (2 · clock_rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemimartingaleWeights {
    pub r: Rate,
    pub c: Rate,
    pub clock_rate: f64,
    pub horizon: Horizon,
}

impl SemimartingaleWeights {
    /// `r = 1`, `c = 0`, `A_t = t`, `γ = T`.
    pub fn standard(horizon: f64) -> Self {
        Self {
            r: Rate::Constant { value: 1.0 },
            c: Rate::Constant { value: 0.0 },
            clock_rate: 1.0,
            horizon: Horizon::Fixed { time: horizon },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.r.validate("r")?;
        self.c.validate("c")?;
        if !(self.clock_rate > 0.0) || !self.clock_rate.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "clock rate must be positive, got {}",
                self.clock_rate
            )));
        }
        match self.horizon {
            Horizon::Fixed { time } if !(time >= 0.0) => {
                Err(LabError::InvalidArgument(format!("horizon must be >= 0, got {time}")))
            }
            Horizon::FirstExit { radius, cap } if !(radius > 0.0) || !(cap >= 0.0) => {
                Err(LabError::InvalidArgument("exit radius must be > 0 and cap >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Largest `τ` reachable before the horizon, when `r` is constant.
    fn tau_end(&self) -> Option<f64> {
        let t = match self.horizon {
            Horizon::Fixed { time } => time,
            Horizon::FirstExit { cap, .. } => cap,
        };
        match self.r {
            Rate::Constant { value } => Some(value * self.clock_rate * t),
            Rate::TraceScaled { .. } => None,
        }
    }
}

/// `b^e` with `b^0 = 1` for every `b ≥ 0`.
fn pow0(base: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        base.powf(exponent)
    }
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// `κ = r^{1/q} (det a)^{1/p} c^θ`; `θ` is zero in the critical band.
#[derive(Debug, Clone, Copy)]
struct KappaExponents {
    r: f64,
    det: f64,
    c: f64,
}

impl KappaExponents {
    fn new(e: &MixedExponents, with_c: bool) -> Self {
        let c = if !with_c || e.regime() == Regime::Critical {
            0.0
        } else {
            e.theta()
        };
        Self {
            r: recip(e.q),
            det: recip(e.p),
            c,
        }
    }

    fn kappa(&self, r: f64, det_a: f64, c: f64) -> f64 {
        pow0(r, self.r) * pow0(det_a, self.det) * pow0(c, self.c)
    }
}

/// One left-endpoint cell of a path functional.
#[derive(Debug, Clone, Copy)]
struct Cell {
    k: usize,
    /// Absolute sampling time `t0 + τ_k`.
    sample_time: f64,
    /// `e^{-φ_k}`.
    discount: f64,
    d_a: f64,
    r: f64,
    c: f64,
    det_a: f64,
    trace_a: f64,
}

/// Number of steps before `γ` on a path.
fn stop_index(p: &PathView<'_>, h: &Horizon) -> Result<usize> {
    let cfg = p.config;
    match *h {
        Horizon::Fixed { time } => cfg.node_index(time),
        Horizon::FirstExit { radius, cap } => {
            let kc = cfg.node_index(cap)?;
            let r2 = radius * radius;
            Ok((0..=kc)
                .find(|&k| p.state(k).iter().map(|v| v * v).sum::<f64>() >= r2)
                .unwrap_or(kc))
        }
    }
}

/// Calls `visit` for each step before `γ`, in step order.
fn walk<F>(p: &PathView<'_>, w: &SemimartingaleWeights, mut visit: F) -> Result<()>
where
    F: FnMut(&Cell, &[f64]) -> Result<()>,
{
    let cfg = p.config;
    let d = p.dim() as i32;
    let dt = cfg.dt();
    let d_a = w.clock_rate * dt;
    let stop = stop_index(p, &w.horizon)?;
    let mut tau = 0.0;
    let mut phi: f64 = 0.0;
    for k in 0..stop {
        let x = p.state(k);
        let (det_h, tr_h) = p.sigma.half_covariance_det_trace(cfg.t0 + cfg.time(k), x);
        let det_a = det_h / w.clock_rate.powi(d);
        let trace_a = tr_h / w.clock_rate;
        let r = w.r.at(trace_a);
        let c = w.c.at(trace_a);
        let cell = Cell {
            k,
            sample_time: cfg.t0 + tau,
            discount: (-phi).exp(),
            d_a,
            r,
            c,
            det_a,
            trace_a,
        };
        visit(&cell, x)?;
        tau += r * d_a;
        phi += c * d_a;
    }
    Ok(())
}

fn check_nonnegative(v: f64, t: f64, x: &[f64]) -> Result<f64> {
    if v < 0.0 || v.is_nan() {
        Err(LabError::NegativeIntegrand {
            value: v,
            t,
            x: x.to_vec(),
        })
    } else {
        Ok(v)
    }
}

/// `‖f · 1_{[lo, hi)}‖_{p,q}`, analytic first, then on the grid.
fn windowed_norm(
    f: &ScalarField,
    window: Option<(f64, f64)>,
    e: &MixedExponents,
    grid: Option<&SpaceTimeGrid>,
) -> Result<Option<f64>> {
    let windowed = match window {
        Some((lo, hi)) => f.clone().windowed(lo, hi),
        None => f.clone(),
    };
    if let Some(v) = analytic_scalar_norm(&windowed, e, (f64::NEG_INFINITY, f64::INFINITY)) {
        return Ok(Some(v));
    }
    match grid {
        Some(g) => {
            let field = GridField::from_scalar(g.clone(), &windowed)?;
            Ok(Some(compute_mixed_norm_ordered(&field, e, e.loop_order())?))
        }
        None => Ok(None),
    }
}

/// `E ∫_0^T f(t0 + t, x_t) dt` by left-endpoint sums.
///
/// With exponents the report carries `‖f · 1_{(t0, t0+T)}‖_{p,q}` as the
/// bound shape; `grid` is used when the field has no closed form.
pub fn estimate_occupation<S: PathSource + ?Sized>(
    src: &S,
    f: &ScalarField,
    horizon: f64,
    exponents: Option<&MixedExponents>,
    grid: Option<&SpaceTimeGrid>,
) -> Result<EstimateReport> {
    let cfg = src.config();
    f.validate(src.dim())?;
    let stop = cfg.node_index(horizon)?;
    let dt = cfg.dt();
    let values = map_paths(src, |p| {
        let mut acc = Vec::with_capacity(stop);
        for k in 0..stop {
            let t = cfg.t0 + cfg.time(k);
            let x = p.state(k);
            acc.push(check_nonnegative(f.eval(t, x), t, x)? * dt);
        }
        Ok(pairwise_sum(&acc))
    })?;
    let mut report = EstimateReport::new("occupation", mean_estimate(&values));
    if let Some(e) = exponents {
        report.bound_value = windowed_norm(f, Some((cfg.t0, cfg.t0 + horizon)), e, grid)?;
        report.bound_label = format!("N*||f||_{{{},{}}}", e.p, e.q);
    }
    Ok(report)
}

/// Per-path values of `∫_0^γ e^{-φ} tr a dA` and `∫_0^γ e^{-φ} |dB|`.
fn ab_samples<S: PathSource + ?Sized>(src: &S, w: &SemimartingaleWeights) -> Result<Vec<(f64, f64)>> {
    w.validate()?;
    map_paths(src, |p| {
        let d = p.dim();
        let dt = p.config.dt();
        let mut b = [0.0; MAX_DIM];
        let mut a_terms = Vec::new();
        let mut b_terms = Vec::new();
        walk(&p, w, |cell, _| {
            p.drift_at(cell.k, &mut b[..d]);
            let mag = b[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            a_terms.push(cell.discount * cell.trace_a * cell.d_a);
            b_terms.push(cell.discount * mag * dt);
            Ok(())
        })?;
        Ok((pairwise_sum(&a_terms), pairwise_sum(&b_terms)))
    })
}

/// Estimates of `A = E ∫_0^γ e^{-φ} tr a dA` and `B = E ∫_0^γ e^{-φ} |dB|`.
///
/// `|dB_t| = |b(t0 + t, x_t)| dt` is recomputed from the ensemble's drift,
/// so a zero drift gives `B = 0` exactly.
pub fn estimate_ab<S: PathSource + ?Sized>(src: &S, w: &SemimartingaleWeights) -> Result<(Estimate, Estimate)> {
    let samples = ab_samples(src, w)?;
    let a: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let b: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok((mean_estimate(&a), mean_estimate(&b)))
}

fn require_admissible(e: &MixedExponents) -> Result<()> {
    e.validate()?;
    if e.regime() == Regime::Supercritical {
        return Err(LabError::Supercritical { theta: e.theta() });
    }
    Ok(())
}

/// `I(p, q, f) = E ∫_0^γ e^{-φ} κ f(t0 + τ, x) dA`.
///
/// The bound shape is `(A + B²)^{d/(2p)} ‖f‖_{p,q}`, so the report's ratio is
/// the fitted constant.
pub fn weighted_functional<S: PathSource + ?Sized>(
    src: &S,
    w: &SemimartingaleWeights,
    f: &ScalarField,
    e: &MixedExponents,
    grid: Option<&SpaceTimeGrid>,
) -> Result<EstimateReport> {
    require_admissible(e)?;
    w.validate()?;
    f.validate(src.dim())?;
    if e.d != src.dim() {
        return Err(LabError::DimensionMismatch {
            expected: src.dim(),
            found: e.d,
        });
    }
    let values = weighted_samples(src, w, e, |t, x| f.eval(t, x))?;
    let mut report = EstimateReport::new("weighted_functional", mean_estimate(&values));
    let window = w.tau_end().map(|end| (src.config().t0, src.config().t0 + end));
    if let Some(norm) = windowed_norm(f, window, e, grid)? {
        let (a, b) = estimate_ab(src, w)?;
        report.bound_value = Some((a.value + b.value * b.value).powf(e.d as f64 / (2.0 * e.p)) * norm);
    }
    report.bound_label = format!("N*(A+B^2)^(d/2p)*||f||_{{{},{}}}", e.p, e.q);
    Ok(report)
}

/// Per-path sums of `e^{-φ_k} κ_k f(t0 + τ_k, x_k) dA` in step order.
fn weighted_samples<S, F>(src: &S, w: &SemimartingaleWeights, e: &MixedExponents, f: F) -> Result<Vec<f64>>
where
    S: PathSource + ?Sized,
    F: Fn(f64, &[f64]) -> f64 + Sync,
{
    let kx = KappaExponents::new(e, true);
    map_paths(src, |p| {
        let mut terms = Vec::new();
        walk(&p, w, |cell, x| {
            let v = check_nonnegative(f(cell.sample_time, x), cell.sample_time, x)?;
            terms.push(cell.discount * kx.kappa(cell.r, cell.det_a, cell.c) * v * cell.d_a);
            Ok(())
        })?;
        Ok(pairwise_sum(&terms))
    })
}

/// Histogram estimate of the Green density with its dual-norm check.
#[derive(Debug, Clone)]
pub struct GreenReport {
    /// Mass per cell divided by `n_paths · cell volume`.
    pub density: GridField,
    /// `G(ℝ^{d+1})`, equal to the weighted functional of `f ≡ 1`.
    pub total_mass: Estimate,
    /// Fraction of the mass that fell outside the grid.
    pub leaked_fraction: f64,
    pub dual_exponents: MixedExponents,
    pub dual_norm: f64,
    /// `(B² + A)^{(1-θ)d/(2p)}`.
    pub bound_shape: f64,
    pub a: Estimate,
    pub b: Estimate,
}

impl GreenReport {
    pub fn ratio(&self) -> f64 {
        self.dual_norm / self.bound_shape
    }
}

/// Leak fraction above which a warning is logged.
pub const LEAK_WARNING: f64 = 0.01;

/// Histogram of `G(Γ) = E ∫_0^γ e^{-φ} κ 1_Γ(t0 + τ, x) dA` on `grid`.
///
/// The dual norm uses `p' = p/(p-1)`, `q' = q/(q-1)` with the same loop order
/// as the primal exponents.
pub fn green_density<S: PathSource + ?Sized>(
    src: &S,
    w: &SemimartingaleWeights,
    grid: &SpaceTimeGrid,
    e: &MixedExponents,
) -> Result<GreenReport> {
    require_admissible(e)?;
    w.validate()?;
    grid.validate()?;
    if grid.dim != src.dim() || e.d != src.dim() {
        return Err(LabError::DimensionMismatch {
            expected: src.dim(),
            found: grid.dim,
        });
    }
    let kx = KappaExponents::new(e, true);
    let n = src.n_paths();
    let cells = grid.len();
    // Few large blocks: each carries a full histogram.
    let block = PATH_BLOCK.max(n.div_ceil(32));
    struct Acc {
        hist: Vec<f64>,
        totals: Vec<f64>,
    }
    let blocks = fold_blocks(
        src,
        block,
        || Acc {
            hist: vec![0.0; cells],
            totals: Vec::new(),
        },
        |acc, p| {
            let mut terms = Vec::new();
            walk(&p, w, |cell, x| {
                let m = cell.discount * kx.kappa(cell.r, cell.det_a, cell.c) * cell.d_a;
                terms.push(m);
                if let Some(i) = grid.locate(cell.sample_time, x) {
                    acc.hist[i] += m;
                }
                Ok(())
            })?;
            acc.totals.push(pairwise_sum(&terms));
            Ok(())
        },
    )?;
    let mut hist = vec![0.0; cells];
    let mut totals = Vec::with_capacity(n);
    for b in blocks {
        hist.iter_mut().zip(&b.hist).for_each(|(h, v)| *h += v);
        totals.extend(b.totals);
    }
    let total_mass = mean_estimate(&totals);
    let captured = pairwise_sum(&hist) / n as f64;
    let leaked_fraction = if total_mass.value > 0.0 {
        ((total_mass.value - captured) / total_mass.value).max(0.0)
    } else {
        0.0
    };
    if leaked_fraction > LEAK_WARNING {
        log::warn!(
            "green density grid misses {:.2}% of the mass; enlarge the grid",
            100.0 * leaked_fraction
        );
    }
    let scale = 1.0 / (n as f64 * grid.cell_volume());
    let density = GridField::new(grid.clone(), hist.into_iter().map(|h| h * scale).collect())?;
    let dual = e.conjugate();
    let dual_norm = compute_mixed_norm_ordered(&density, &dual, e.loop_order())?;
    let (a, b) = estimate_ab(src, w)?;
    let theta = if e.regime() == Regime::Critical { 0.0 } else { e.theta() };
    let bound_shape = (b.value * b.value + a.value).powf((1.0 - theta) * e.d as f64 / (2.0 * e.p));
    Ok(GreenReport {
        density,
        total_mass,
        leaked_fraction,
        dual_exponents: dual,
        dual_norm,
        bound_shape,
        a,
        b,
    })
}

/// Outcome of [`drift_budget_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub a: Estimate,
    pub b: Estimate,
    pub h_norm: f64,
    /// `A^{1/2} + ‖h‖^{p0/(p0-d)}`.
    pub rhs_shape: f64,
    pub ratio: f64,
    pub violations: usize,
    pub samples: usize,
    /// False when `θ0 < 0` and the check ran with `κ⁰ = r^{1/q0} (det a)^{1/p0}`.
    pub within_hypotheses: bool,
}

impl BudgetReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.violations as f64 / self.samples as f64
        }
    }
}

/// Largest tolerated fraction of hypothesis violations.
pub const VIOLATION_LIMIT: f64 = 1e-3;

const HYPOTHESIS_RTOL: f64 = 1e-12;

/// Checks `|b_t| ≤ κ⁰_t h(t0 + τ_t, x_t)` along the paths and reports
/// `B / (A^{1/2} + ‖h‖_{p0,q0}^{p0/(p0-d)})`.
///
/// When `θ0 < 0` and `c ≡ 0` the factor `c^{θ0}` is dropped and the report is
/// flagged as outside the hypotheses.
pub fn drift_budget_check<S: PathSource + ?Sized>(
    src: &S,
    w: &SemimartingaleWeights,
    h: &ScalarField,
    e0: &MixedExponents,
    grid: Option<&SpaceTimeGrid>,
) -> Result<BudgetReport> {
    e0.validate()?;
    w.validate()?;
    h.validate(src.dim())?;
    if e0.q.is_infinite() {
        return Err(LabError::InvalidExponents("q0 must be finite".into()));
    }
    let within_hypotheses = e0.regime() != Regime::Supercritical;
    if !within_hypotheses && !w.c.is_zero() {
        return Err(LabError::Supercritical { theta: e0.theta() });
    }
    let kx = KappaExponents::new(e0, within_hypotheses);
    let counts = map_paths(src, |p| {
        let d = p.dim();
        let mut b = [0.0; MAX_DIM];
        let (mut bad, mut seen) = (0usize, 0usize);
        walk(&p, w, |cell, x| {
            p.drift_at(cell.k, &mut b[..d]);
            let mag = b[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let hv = check_nonnegative(h.eval(cell.sample_time, x), cell.sample_time, x)?;
            let allowed = kx.kappa(cell.r, cell.det_a, cell.c) * hv;
            seen += 1;
            if mag > allowed + HYPOTHESIS_RTOL * mag.max(allowed) {
                bad += 1;
            }
            Ok(())
        })?;
        Ok((bad, seen))
    })?;
    let violations: usize = counts.iter().map(|c| c.0).sum();
    let samples: usize = counts.iter().map(|c| c.1).sum();
    if samples > 0 && violations as f64 / samples as f64 > VIOLATION_LIMIT {
        return Err(LabError::HypothesisViolated {
            fraction: violations as f64 / samples as f64,
        });
    }
    let (a, b) = estimate_ab(src, w)?;
    let window = w.tau_end().map(|end| (src.config().t0, src.config().t0 + end));
    let h_norm = windowed_norm(h, window, e0, grid)?
        .ok_or_else(|| LabError::InvalidArgument("h has no closed-form norm; a grid is required".into()))?;
    let p0 = e0.p;
    let d = e0.d as f64;
    let h_term = if p0.is_infinite() {
        h_norm
    } else {
        h_norm.powf(p0 / (p0 - d))
    };
    let rhs_shape = a.value.sqrt() + h_term;
    Ok(BudgetReport {
        a,
        b,
        h_norm,
        rhs_shape,
        ratio: b.value / rhs_shape,
        violations,
        samples,
        within_hypotheses,
    })
}
