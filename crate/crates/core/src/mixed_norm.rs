//! Mixed Lebesgue norms `‖f‖_{p,q}` of space-time fields.
//!
//! For `p ≥ q` the outer integral runs over time,
//! `‖f‖^q = ∫ (∫ |f|^p dx)^{q/p} dt`; for `p < q` the outer integral runs
//! over space. Infinite exponents replace the corresponding integral by a
//! supremum. Grid fields use the tensor midpoint rule; the analytic families
//! of [`crate::fields`] have closed forms or one-dimensional quadratures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{DriftField, ScalarField, SingularDrift, MAX_DIM};
use crate::quadrature::{power_integral, radial_power_integral, unit_ball_volume, unit_sphere_area, GaussLegendre};

const CRITICAL_TOL: f64 = 1e-12;

/// Integrability exponents `(p, q)` in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedExponents {
    pub p: f64,
    pub q: f64,
    pub d: usize,
}

/// Position relative to `d/p + 1/q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Critical,
    Subcritical,
    Supercritical,
}

impl MixedExponents {
    pub fn new(p: f64, q: f64, d: usize) -> Result<Self> {
        let e = Self { p, q, d };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.q >= 1.0) {
            return Err(LabError::InvalidExponents(format!(
                "p and q must lie in [1, inf], got p = {}, q = {}",
                self.p, self.q
            )));
        }
        if self.d < 2 || self.d > MAX_DIM {
            return Err(LabError::InvalidExponents(format!(
                "dimension must lie in 2..={MAX_DIM}, got {}",
                self.d
            )));
        }
        Ok(())
    }

    /// `θ = 1 - d/p - 1/q`, with `1/∞ = 0`.
    pub fn theta(&self) -> f64 {
        1.0 - self.d as f64 * recip(self.p) - recip(self.q)
    }

    pub fn regime(&self) -> Regime {
        let theta = self.theta();
        if theta.abs() < CRITICAL_TOL {
            Regime::Critical
        } else if theta > 0.0 {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }

    /// `θ ≥ 0`, counting the critical band as admissible.
    pub fn is_admissible(&self) -> bool {
        self.regime() != Regime::Supercritical
    }

    /// Hölder conjugates `(p/(p-1), q/(q-1))`.
    pub fn conjugate(&self) -> Self {
        Self {
            p: conjugate_exponent(self.p),
            q: conjugate_exponent(self.q),
            d: self.d,
        }
    }

    pub fn loop_order(&self) -> LoopOrder {
        if self.p >= self.q {
            LoopOrder::TimeOuter
        } else {
            LoopOrder::SpaceOuter
        }
    }
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `θ` and its classification. Inside the critical band `θ` is reported as
/// exactly zero.
pub fn subcriticality(e: &MixedExponents) -> (f64, Regime) {
    match e.regime() {
        Regime::Critical => (0.0, Regime::Critical),
        r => (e.theta(), r),
    }
}

/// Which variable the outer integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopOrder {
    /// `(∫ (∫ |f|^p dx)^{q/p} dt)^{1/q}`.
    TimeOuter,
    /// `(∫ (∫ |f|^q dt)^{p/q} dx)^{1/p}`.
    SpaceOuter,
}

/// `[t_min, t_max] × [-L, L]^d` split into `n_t × n_x^d` equal cells.
///
/// Fields are sampled at cell midpoints, so the faces `x_i = 0` and `t = t_min`
/// are never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub half_width: f64,
    pub n_x: usize,
    pub dim: usize,
}

impl SpaceTimeGrid {
    pub fn new(t_min: f64, t_max: f64, n_t: usize, half_width: f64, n_x: usize, dim: usize) -> Result<Self> {
        let g = Self {
            t_min,
            t_max,
            n_t,
            half_width,
            n_x,
            dim,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 || self.n_x < 2 {
            return Err(LabError::InvalidGrid(format!(
                "need n_t >= 2 and n_x >= 2, got n_t = {}, n_x = {}",
                self.n_t, self.n_x
            )));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(LabError::InvalidGrid(format!(
                "half width must be positive and finite, got {}",
                self.half_width
            )));
        }
        if !(self.t_max > self.t_min) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return Err(LabError::InvalidGrid(format!(
                "time interval [{}, {}] is empty",
                self.t_min, self.t_max
            )));
        }
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(LabError::InvalidGrid(format!(
                "dimension {} outside 1..={MAX_DIM}",
                self.dim
            )));
        }
        if self.n_spatial_checked().is_none() {
            return Err(LabError::InvalidGrid("grid too large".into()));
        }
        Ok(())
    }

    fn n_spatial_checked(&self) -> Option<usize> {
        self.n_x
            .checked_pow(self.dim as u32)
            .and_then(|s| s.checked_mul(self.n_t))
            .map(|total| total / self.n_t)
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_x as f64
    }

    pub fn spatial_cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.spatial_cell_volume()
    }

    pub fn n_spatial(&self) -> usize {
        self.n_x.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.n_t * self.n_spatial()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_mid(&self, it: usize) -> f64 {
        self.t_min + (it as f64 + 0.5) * self.dt()
    }

    /// Midpoint of spatial cell `ix`; axis 0 varies fastest.
    pub fn x_mid(&self, ix: usize, out: &mut [f64]) {
        let dx = self.dx();
        let mut rem = ix;
        for o in out.iter_mut().take(self.dim) {
            *o = -self.half_width + ((rem % self.n_x) as f64 + 0.5) * dx;
            rem /= self.n_x;
        }
    }

    /// Flat index of the cell containing `(t, x)`, if any.
    ///
    /// Cells are half-open, `[lo, hi)`, except the last one on each axis.
    pub fn locate(&self, t: f64, x: &[f64]) -> Option<usize> {
        let it = axis_index(t, self.t_min, self.dt(), self.n_t)?;
        let dx = self.dx();
        let mut ix = 0;
        let mut stride = 1;
        for &xi in x.iter().take(self.dim) {
            ix += stride * axis_index(xi, -self.half_width, dx, self.n_x)?;
            stride *= self.n_x;
        }
        Some(it * self.n_spatial() + ix)
    }
}

fn axis_index(v: f64, lo: f64, h: f64, n: usize) -> Option<usize> {
    let s = (v - lo) / h;
    if !(s >= 0.0) || s > n as f64 {
        return None;
    }
    Some((s as usize).min(n - 1))
}

/// Scalar values at the cell midpoints of a grid, `values[it * n_spatial + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(LabError::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::InvalidField(format!(
                "grid value {i} is not finite; mask singularities before sampling"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every cell midpoint.
    pub fn from_fn<F>(grid: SpaceTimeGrid, f: F) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Sync,
    {
        grid.validate()?;
        let ns = grid.n_spatial();
        let d = grid.dim;
        let mut values = vec![0.0; grid.len()];
        values.par_chunks_mut(ns).enumerate().for_each(|(it, slice)| {
            let t = grid.t_mid(it);
            let mut x = [0.0; MAX_DIM];
            for (ix, v) in slice.iter_mut().enumerate() {
                grid.x_mid(ix, &mut x[..d]);
                *v = f(t, &x[..d]);
            }
        });
        Self::new(grid, values)
    }

    pub fn from_scalar(grid: SpaceTimeGrid, f: &ScalarField) -> Result<Self> {
        f.validate(grid.dim)?;
        Self::from_fn(grid, |t, x| f.eval(t, x))
    }

    /// `|b|` at every cell midpoint.
    pub fn from_drift_magnitude(grid: SpaceTimeGrid, b: &DriftField) -> Result<Self> {
        b.validate(grid.dim)?;
        Self::from_fn(grid, |t, x| b.magnitude(t, x))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn time_slice(&self, it: usize) -> &[f64] {
        let ns = self.grid.n_spatial();
        &self.values[it * ns..(it + 1) * ns]
    }
}

/// `‖f‖_{p,q}` on the grid, using the branch fixed by `p ≥ q`.
pub fn compute_mixed_norm(f: &GridField, e: &MixedExponents) -> Result<f64> {
    compute_mixed_norm_ordered(f, e, e.loop_order())
}

/// `‖f‖_{p,q}` with an explicit loop order.
///
/// The two orders coincide for `p = q`; otherwise only the one chosen by
/// [`MixedExponents::loop_order`] is the norm.
pub fn compute_mixed_norm_ordered(f: &GridField, e: &MixedExponents, order: LoopOrder) -> Result<f64> {
    e.validate()?;
    if f.grid.dim != e.d {
        return Err(LabError::DimensionMismatch {
            expected: e.d,
            found: f.grid.dim,
        });
    }
    if f.values.is_empty() {
        return Err(LabError::InvalidGrid("empty grid".into()));
    }
    // Normalizing by the maximum keeps |f|^p in range and makes the result
    // exactly homogeneous up to the final multiplication.
    let scale = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let g = &f.grid;
    let ns = g.n_spatial();
    let nt = g.n_t;
    let dv = g.spatial_cell_volume();
    let dt = g.dt();
    let at = |it: usize, ix: usize| (f.values[it * ns + ix] / scale).abs();
    let value = match order {
        LoopOrder::TimeOuter => {
            let slices: Vec<f64> = (0..nt)
                .into_par_iter()
                .map(|it| lp_norm((0..ns).map(|ix| at(it, ix)), e.p, dv))
                .collect();
            lp_norm(slices.into_iter(), e.q, dt)
        }
        LoopOrder::SpaceOuter => {
            let columns: Vec<f64> = (0..ns)
                .into_par_iter()
                .map(|ix| lp_norm((0..nt).map(|it| at(it, ix)), e.q, dt))
                .collect();
            lp_norm(columns.into_iter(), e.p, dv)
        }
    };
    Ok(scale * value)
}

/// `(Σ |v|^r · w)^{1/r}`, or the maximum for `r = ∞`.
fn lp_norm<I: Iterator<Item = f64>>(values: I, r: f64, weight: f64) -> f64 {
    if r.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        let s: f64 = values.map(|v| v.powf(r)).sum();
        (s * weight).powf(1.0 / r)
    }
}

/// How a norm value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Analytic,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEvaluation {
    pub value: f64,
    pub method: NormMethod,
}

/// Time window `[lo, hi]` applied to analytic norms.
pub type Window = (f64, f64);

const ALL_TIME: Window = (f64::NEG_INFINITY, f64::INFINITY);

/// `‖|b|‖_{p,q}`: closed form when available, otherwise the midpoint rule on
/// `grid`.
pub fn drift_norm(b: &DriftField, e: &MixedExponents, grid: Option<&SpaceTimeGrid>) -> Result<NormEvaluation> {
    e.validate()?;
    b.validate(e.d)?;
    if let Some(value) = analytic_drift_norm(b, e, ALL_TIME) {
        return Ok(NormEvaluation {
            value,
            method: NormMethod::Analytic,
        });
    }
    let grid =
        grid.ok_or_else(|| LabError::InvalidArgument("no closed form for this drift; a grid is required".into()))?;
    let g = GridField::from_drift_magnitude(grid.clone(), b)?;
    Ok(NormEvaluation {
        value: compute_mixed_norm(&g, e)?,
        method: NormMethod::Grid,
    })
}

/// `‖f‖_{p,q}` for a scalar field, closed form when available.
pub fn scalar_norm(f: &ScalarField, e: &MixedExponents, grid: Option<&SpaceTimeGrid>) -> Result<NormEvaluation> {
    e.validate()?;
    f.validate(e.d)?;
    if let Some(value) = analytic_scalar_norm(f, e, ALL_TIME) {
        return Ok(NormEvaluation {
            value,
            method: NormMethod::Analytic,
        });
    }
    let grid =
        grid.ok_or_else(|| LabError::InvalidArgument("no closed form for this field; a grid is required".into()))?;
    let g = GridField::from_scalar(grid.clone(), f)?;
    Ok(NormEvaluation {
        value: compute_mixed_norm(&g, e)?,
        method: NormMethod::Grid,
    })
}

fn intersect(a: Window, b: Window) -> Window {
    (a.0.max(b.0), a.1.min(b.1))
}

fn length(w: Window) -> f64 {
    (w.1 - w.0).max(0.0)
}

/// `|v| · |S|^{1/p} · |T|^{1/q}` for `v` times the indicator of `T × S`.
fn indicator_norm(value: f64, space_measure: f64, time_measure: f64, e: &MixedExponents) -> f64 {
    if value == 0.0 || space_measure == 0.0 || time_measure == 0.0 {
        return 0.0;
    }
    value.abs() * space_measure.powf(recip(e.p)) * time_measure.powf(recip(e.q))
}

/// Closed-form norm of `|b|` restricted to the time window, when known.
pub fn analytic_drift_norm(b: &DriftField, e: &MixedExponents, window: Window) -> Option<f64> {
    match b {
        DriftField::Zero => Some(0.0),
        DriftField::Constant { value } => {
            let m = value.iter().map(|v| v * v).sum::<f64>().sqrt();
            Some(indicator_norm(m, f64::INFINITY, length(window), e))
        }
        DriftField::Linear { coef } => {
            if *coef == 0.0 || length(window) == 0.0 {
                Some(0.0)
            } else {
                Some(f64::INFINITY)
            }
        }
        DriftField::Singular(s) => singular_norm(s, Part::Whole, window, e),
        DriftField::Cylinder {
            value,
            radius,
            t_start,
            t_end,
        } => {
            let m = value.iter().map(|v| v * v).sum::<f64>().sqrt();
            let vol = unit_ball_volume(e.d) * radius.powi(e.d as i32);
            Some(indicator_norm(m, vol, length(intersect((*t_start, *t_end), window)), e))
        }
        DriftField::Truncated { base, level } => match base.as_ref() {
            DriftField::Singular(s) => singular_norm(s, Part::Kept(*level), window, e),
            DriftField::Truncated {
                base: inner,
                level: inner_level,
            } => analytic_drift_norm(
                &DriftField::Truncated {
                    base: inner.clone(),
                    level: level.min(*inner_level),
                },
                e,
                window,
            ),
            DriftField::Zero => Some(0.0),
            DriftField::Constant { value } | DriftField::Cylinder { value, .. } => {
                let m = value.iter().map(|v| v * v).sum::<f64>().sqrt();
                if m <= *level {
                    analytic_drift_norm(base, e, window)
                } else {
                    Some(0.0)
                }
            }
            _ => None,
        },
        DriftField::Mollified { .. } => None,
    }
}

/// Closed-form norm of `f` restricted to the time window, when known.
pub fn analytic_scalar_norm(f: &ScalarField, e: &MixedExponents, window: Window) -> Option<f64> {
    match f {
        ScalarField::Zero => Some(0.0),
        ScalarField::Constant { value } => Some(indicator_norm(*value, f64::INFINITY, length(window), e)),
        ScalarField::Box {
            value,
            t_start,
            t_end,
            lower,
            upper,
        } => {
            let vol: f64 = lower.iter().zip(upper).map(|(l, u)| u - l).product();
            Some(indicator_norm(
                *value,
                vol,
                length(intersect((*t_start, *t_end), window)),
                e,
            ))
        }
        ScalarField::Ball {
            value,
            t_start,
            t_end,
            radius,
            ..
        } => {
            let vol = unit_ball_volume(e.d) * radius.powi(e.d as i32);
            Some(indicator_norm(
                *value,
                vol,
                length(intersect((*t_start, *t_end), window)),
                e,
            ))
        }
        ScalarField::Gaussian {
            amplitude,
            width,
            t_start,
            t_end,
            ..
        } => {
            let len = length(intersect((*t_start, *t_end), window));
            if *amplitude == 0.0 || len == 0.0 {
                return Some(0.0);
            }
            let spatial = if e.p.is_infinite() {
                1.0
            } else {
                let integral = (2.0 * std::f64::consts::PI * width * width / e.p).powf(e.d as f64 / 2.0);
                integral.powf(1.0 / e.p)
            };
            Some(amplitude.abs() * spatial * len.powf(recip(e.q)))
        }
        ScalarField::Bump {
            amplitude,
            radius,
            t_center,
            ..
        } => {
            let support = (t_center - radius, t_center + radius);
            let len = length(intersect(support, window));
            if *amplitude == 0.0 || len == 0.0 {
                Some(0.0)
            } else if len < support.1 - support.0 || e.p != e.q {
                None
            } else if e.p.is_infinite() {
                Some(amplitude.abs() * (-1.0f64).exp())
            } else {
                Some(amplitude.abs() * bump_lp(e.d + 1, e.p, *radius))
            }
        }
        ScalarField::DriftMagnitude { drift, scale } => {
            if *scale == 0.0 {
                Some(0.0)
            } else {
                analytic_drift_norm(drift, e, window).map(|v| scale.abs() * v)
            }
        }
        ScalarField::Windowed { base, t_start, t_end } => {
            analytic_scalar_norm(base, e, intersect((*t_start, *t_end), window))
        }
        ScalarField::Mollified { .. } => None,
    }
}

/// `‖bump(·/radius)‖_{L_p(ℝ^n)}` by radial quadrature.
fn bump_lp(n: usize, p: f64, radius: f64) -> f64 {
    let radial = GaussLegendre::new(20).composite(0.0, 1.0, 64, |r| r.powi(n as i32 - 1) * (-p / (1.0 - r * r)).exp());
    (unit_sphere_area(n) * radius.powi(n as i32) * radial).powf(1.0 / p)
}

/// Which part of the singular drift to measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Part {
    Whole,
    /// `b · 1{|b| ≤ M}`.
    Kept(f64),
    /// `b · 1{|b| > M}`, the truncation error.
    Removed(f64),
}

const GL_ORDER: usize = 16;
const GL_PANELS: usize = 256;

/// Norm of a part of the singular drift over a time window.
///
/// The kept set at time `t` is `{ρ(t) ≤ |x| ≤ 1}` with
/// `ρ(t) = (t^α M)^{-1/β}`, equivalently `{t ≥ s(r)}` with
/// `s(r) = (M r^β)^{-1/α}`. The remaining one-dimensional integrals are done
/// by composite Gauss–Legendre in `log t` or `log r`. Returns `None` for the
/// truncated parts with an infinite exponent.
pub fn singular_norm(s: &SingularDrift, part: Part, window: Window, e: &MixedExponents) -> Option<f64> {
    let a = window.0.max(0.0);
    let b = window.1.min(1.0);
    if b <= a {
        return Some(0.0);
    }
    if let Part::Kept(m) | Part::Removed(m) = part {
        if m <= 0.0 {
            return Some(if matches!(part, Part::Kept(_)) {
                0.0
            } else {
                singular_norm(s, Part::Whole, window, e)?
            });
        }
    }
    if e.p.is_infinite() || e.q.is_infinite() {
        return match part {
            Part::Whole | Part::Removed(_) => Some(f64::INFINITY),
            Part::Kept(_) => None,
        };
    }
    let (p, q, d) = (e.p, e.q, e.d);
    let (alpha, beta) = (s.alpha, s.beta);
    let radial = |r0: f64, r1: f64| radial_power_integral(d, beta * p, r0, r1);
    let rule = GaussLegendre::new(GL_ORDER);
    let log_integral = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        rule.composite(lo.ln(), hi.ln(), GL_PANELS, |u| {
            let v = u.exp();
            v * f(v)
        })
    };
    match (e.loop_order(), part) {
        (_, Part::Whole) => {
            let space = radial(0.0, 1.0);
            let time = power_integral(alpha * q, a, b);
            Some(space.powf(1.0 / p) * time.powf(1.0 / q))
        }
        (LoopOrder::TimeOuter, Part::Kept(m)) => {
            let t_star = m.powf(-1.0 / alpha);
            let lo = a.max(t_star);
            let total = log_integral(lo, b, &|t| {
                let rho = s.truncation_radius(t, m).min(1.0);
                t.powf(-alpha * q) * radial(rho, 1.0).powf(q / p)
            });
            Some(total.powf(1.0 / q))
        }
        (LoopOrder::TimeOuter, Part::Removed(m)) => {
            let t_star = m.powf(-1.0 / alpha);
            let full = radial(0.0, 1.0);
            let head = if a < t_star.min(b) {
                full.powf(q / p) * power_integral(alpha * q, a, t_star.min(b))
            } else {
                0.0
            };
            if head.is_infinite() {
                return Some(f64::INFINITY);
            }
            let tail = log_integral(a.max(t_star), b, &|t| {
                let rho = s.truncation_radius(t, m).min(1.0);
                t.powf(-alpha * q) * radial(0.0, rho).powf(q / p)
            });
            Some((head + tail).powf(1.0 / q))
        }
        (LoopOrder::SpaceOuter, Part::Kept(m)) => {
            // s(r) <= b  <=>  r >= (M b^α)^{-1/β}
            let r_lo = (m * b.powf(alpha)).powf(-1.0 / beta);
            let inner = |r: f64| {
                let start = (m * r.powf(beta)).powf(-1.0 / alpha);
                power_integral(alpha * q, a.max(start), b)
            };
            let f = |r: f64| r.powf(d as f64 - 1.0 - beta * p) * inner(r).powf(p / q);
            let total = split_log_integral(&log_integral, r_lo.min(1.0), 1.0, kink(a, m, alpha, beta), &f);
            Some((crate::quadrature::unit_sphere_area(d) * total).powf(1.0 / p))
        }
        (LoopOrder::SpaceOuter, Part::Removed(m)) => {
            let r_lo = (m * b.powf(alpha)).powf(-1.0 / beta).min(1.0);
            let full_time = power_integral(alpha * q, a, b);
            let head = radial(0.0, r_lo) * full_time.powf(p / q);
            if head.is_infinite() {
                return Some(f64::INFINITY);
            }
            let inner = |r: f64| {
                let stop = (m * r.powf(beta)).powf(-1.0 / alpha);
                power_integral(alpha * q, a, b.min(stop))
            };
            let f = |r: f64| r.powf(d as f64 - 1.0 - beta * p) * inner(r).powf(p / q);
            let tail = split_log_integral(&log_integral, r_lo, 1.0, kink(a, m, alpha, beta), &f);
            Some((head + crate::quadrature::unit_sphere_area(d) * tail).powf(1.0 / p))
        }
    }
}

/// Radius where `s(r) = a`, a kink of the inner time integral.
fn kink(a: f64, m: f64, alpha: f64, beta: f64) -> Option<f64> {
    (a > 0.0).then(|| (m * a.powf(alpha)).powf(-1.0 / beta))
}

/// `(lo, hi, integrand) -> ∫_lo^hi integrand`.
type Integrator<'a> = &'a dyn Fn(f64, f64, &dyn Fn(f64) -> f64) -> f64;

fn split_log_integral(integral: Integrator<'_>, lo: f64, hi: f64, split: Option<f64>, f: &dyn Fn(f64) -> f64) -> f64 {
    match split {
        Some(c) if c > lo && c < hi => integral(lo, c, f) + integral(c, hi, f),
        _ => integral(lo, hi, f),
    }
}

/// `‖b - b·1{|b| ≤ M}‖_{p,q}` for the singular drift.
pub fn singular_remainder_norm(s: &SingularDrift, level: f64, e: &MixedExponents) -> Result<f64> {
    e.validate()?;
    singular_norm(s, Part::Removed(level), ALL_TIME, e)
        .ok_or_else(|| LabError::InvalidArgument("remainder norm needs finite exponents".into()))
}

/// `B(t) = ∫_{-∞}^t (∫ |b|^p dx)^{q/p} ds`.
///
/// Only defined on the branch `p ≥ q`, where the norm is additive in time.
pub fn drift_mass(b: &DriftField, e: &MixedExponents, t: f64) -> Result<f64> {
    check_mass_branch(e)?;
    b.validate(e.d)?;
    let norm = analytic_drift_norm(b, e, (f64::NEG_INFINITY, t))
        .ok_or_else(|| LabError::InvalidField("drift mass needs a closed form; use drift_mass_on_grid".into()))?;
    Ok(norm.powf(e.q))
}

fn check_mass_branch(e: &MixedExponents) -> Result<()> {
    e.validate()?;
    if e.p < e.q {
        return Err(LabError::WrongBranch { p: e.p, q: e.q });
    }
    if e.q.is_infinite() {
        return Err(LabError::InvalidExponents("drift mass needs q < inf".into()));
    }
    Ok(())
}

/// `B` at the cell edges `t_min + k·dt`, `k = 0..=n_t`, from grid samples of
/// `|b|`. Mass before `t_min` is ignored.
pub fn drift_mass_on_grid(b: &DriftField, e: &MixedExponents, grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
    check_mass_branch(e)?;
    if grid.dim != e.d {
        return Err(LabError::DimensionMismatch {
            expected: e.d,
            found: grid.dim,
        });
    }
    let field = GridField::from_drift_magnitude(grid.clone(), b)?;
    let dv = grid.spatial_cell_volume();
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.n_t + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for it in 0..grid.n_t {
        let slice = lp_norm(field.time_slice(it).iter().map(|v| v.abs()), e.p, dv);
        acc += slice.powf(e.q) * dt;
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::truncate;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn ex(p: f64, q: f64) -> MixedExponents {
        MixedExponents::new(p, q, 2).unwrap()
    }

    fn example_drift() -> DriftField {
        DriftField::Singular(SingularDrift::new(1.0 / 3.0, 2.0 / 3.0).unwrap())
    }

    #[test]
    fn theta_and_regimes() {
        let (theta, regime) = subcriticality(&ex(3.0, 3.0));
        assert!(theta.abs() < 1e-15);
        assert_eq!(regime, Regime::Critical);
        let (theta, regime) = subcriticality(&ex(f64::INFINITY, 1.0));
        assert_eq!(theta, 0.0);
        assert_eq!(regime, Regime::Critical);
        let (theta, regime) = subcriticality(&ex(2.5, 2.5));
        assert_relative_eq!(theta, -0.2, max_relative = 1e-14);
        assert_eq!(regime, Regime::Supercritical);
        assert_eq!(ex(4.0, 4.0).regime(), Regime::Subcritical);
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(MixedExponents::new(0.5, 2.0, 2).is_err());
        assert!(MixedExponents::new(2.0, f64::NAN, 2).is_err());
        assert!(MixedExponents::new(2.0, 2.0, 1).is_err());
    }

    #[test]
    fn conjugates() {
        let c = ex(3.0, 1.5).conjugate();
        assert_relative_eq!(c.p, 1.5);
        assert_relative_eq!(c.q, 3.0);
        let c = ex(f64::INFINITY, 1.0).conjugate();
        assert_eq!((c.p, c.q), (1.0, f64::INFINITY));
    }

    #[test]
    fn unit_box_has_unit_norm() {
        let grid = SpaceTimeGrid::new(-0.5, 1.5, 8, 2.0, 8, 2).unwrap();
        let f = GridField::from_fn(grid, |t, x| {
            let inside = (0.0..1.0).contains(&t) && x.iter().all(|v| (0.0..1.0).contains(v));
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        for (p, q) in [(1.0, 1.0), (2.0, 3.0), (3.0, 1.5), (7.0, 7.0)] {
            assert_relative_eq!(compute_mixed_norm(&f, &ex(p, q)).unwrap(), 1.0, max_relative = 1e-12);
        }
        let g = f.scaled(3.0);
        assert_relative_eq!(
            compute_mixed_norm(&g, &ex(3.0, 3.0)).unwrap(),
            3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn infinite_exponents_take_suprema() {
        let grid = SpaceTimeGrid::new(0.0, 1.0, 4, 1.0, 4, 2).unwrap();
        let f = GridField::from_fn(grid, |t, x| t + x[0].abs()).unwrap();
        let max = f.values.iter().cloned().fold(0.0, f64::max);
        let n = compute_mixed_norm(&f, &ex(f64::INFINITY, f64::INFINITY)).unwrap();
        assert_eq!(n, max);
        // p = inf, q = 1: integral over t of the spatial maximum
        let n = compute_mixed_norm(&f, &ex(f64::INFINITY, 1.0)).unwrap();
        let expected: f64 = (0..4).map(|it| 0.25 * (f.grid.t_mid(it) + 0.75)).sum();
        assert_relative_eq!(n, expected, max_relative = 1e-14);
    }

    #[test]
    fn analytic_example_norm() {
        let e = ex(2.5, 2.5);
        let n = drift_norm(&example_drift(), &e, None).unwrap();
        assert_eq!(n.method, NormMethod::Analytic);
        // ∫_{B_1} |x|^{-5/3} dx = 2π/(1/3) = 6π, ∫ t^{-5/6} dt = 6
        let oracle = (6.0 * PI * 6.0f64).powf(0.4);
        assert_relative_eq!(n.value, oracle, max_relative = 1e-12);
        assert!((n.value - 6.628).abs() < 1e-3);
    }

    #[test]
    fn critical_example_norm_is_infinite() {
        // βp = 2 = d at p = 3
        let e = ex(3.0, 3.0);
        let n = drift_norm(&example_drift(), &e, None).unwrap();
        assert_eq!(n.value, f64::INFINITY);
    }

    #[test]
    fn drift_mass_example() {
        let e = ex(2.5, 2.5);
        let b = example_drift();
        assert_relative_eq!(drift_mass(&b, &e, 1.0).unwrap(), 36.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(drift_mass(&b, &e, 5.0).unwrap(), 36.0 * PI, max_relative = 1e-12);
        assert_eq!(drift_mass(&b, &e, 0.0).unwrap(), 0.0);
        assert_eq!(drift_mass(&b, &e, -1.0).unwrap(), 0.0);
        assert_eq!(drift_mass(&DriftField::Zero, &e, 1.0).unwrap(), 0.0);
        assert!(matches!(
            drift_mass(&b, &ex(2.0, 3.0), 1.0),
            Err(LabError::WrongBranch { .. })
        ));
    }

    #[test]
    fn kept_and_removed_partition_the_power() {
        // ‖b‖^q = ‖kept‖^q + ‖removed‖^q on the time-outer branch with p = q
        let s = SingularDrift::new(1.0 / 3.0, 2.0 / 3.0).unwrap();
        let e = ex(2.5, 2.5);
        let whole = singular_norm(&s, Part::Whole, ALL_TIME, &e).unwrap();
        for m in [3.0, 10.0, 100.0] {
            let kept = singular_norm(&s, Part::Kept(m), ALL_TIME, &e).unwrap();
            let removed = singular_norm(&s, Part::Removed(m), ALL_TIME, &e).unwrap();
            assert_relative_eq!(kept.powf(2.5) + removed.powf(2.5), whole.powf(2.5), max_relative = 1e-8);
        }
    }

    #[test]
    fn space_outer_truncated_norm_matches_grid_sum() {
        // p < q: compare the log-radius quadrature against a direct 2-d
        // midpoint sum in (r, t) on the kept set.
        let s = SingularDrift::new(0.4, 0.6).unwrap();
        let e = ex(2.0, 3.0);
        let m = 5.0;
        let analytic = singular_norm(&s, Part::Kept(m), ALL_TIME, &e).unwrap();
        let (nr, nt) = (4000, 4000);
        let mut outer = 0.0;
        for i in 0..nr {
            let r = (i as f64 + 0.5) / nr as f64;
            let mut inner = 0.0;
            for j in 0..nt {
                let t = (j as f64 + 0.5) / nt as f64;
                let v = s.magnitude(t, r);
                if v <= m {
                    inner += v.powf(3.0) / nt as f64;
                }
            }
            outer += 2.0 * PI * r * inner.powf(2.0 / 3.0) / nr as f64;
        }
        let direct = outer.sqrt();
        assert_relative_eq!(analytic, direct, max_relative = 2e-3);
    }

    #[test]
    fn remainder_norm_decreases() {
        let s = SingularDrift::new(1.0 / 3.0, 2.0 / 3.0).unwrap();
        let e = ex(2.5, 2.5);
        let r: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&m| singular_remainder_norm(&s, m, &e).unwrap())
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2] && r[2] > 0.0);
    }

    #[test]
    fn cylinder_mass_is_quadratic_profile() {
        let b = DriftField::Cylinder {
            value: vec![1.0, 0.0],
            radius: 1.0,
            t_start: 0.0,
            t_end: 1.0,
        };
        let e = ex(3.0, 3.0);
        for t in [0.25, 0.5, 1.0] {
            assert_relative_eq!(drift_mass(&b, &e, t).unwrap(), PI * t, max_relative = 1e-12);
        }
    }

    #[test]
    fn truncated_drift_norm_uses_kept_part() {
        let b = truncate(example_drift(), 50.0);
        let e = ex(2.5, 2.5);
        let n = drift_norm(&b, &e, None).unwrap();
        assert_eq!(n.method, NormMethod::Analytic);
        let whole = drift_norm(&example_drift(), &e, None).unwrap().value;
        assert!(n.value < whole);
        let n0 = drift_norm(&truncate(example_drift(), 0.0), &e, None).unwrap();
        assert_eq!(n0.value, 0.0);
    }

    #[test]
    fn gaussian_norm_closed_form() {
        let f = ScalarField::Gaussian {
            amplitude: 2.0,
            width: 0.5,
            center: vec![0.3, -0.1],
            t_start: 0.0,
            t_end: 2.0,
        };
        let e = ex(3.0, 2.0);
        let analytic = scalar_norm(&f, &e, None).unwrap().value;
        let grid = SpaceTimeGrid::new(0.0, 2.0, 4, 4.0, 400, 2).unwrap();
        let g = GridField::from_scalar(grid, &f).unwrap();
        assert_relative_eq!(compute_mixed_norm(&g, &e).unwrap(), analytic, max_relative = 1e-10);
    }

    #[test]
    fn bump_norm_matches_grid() {
        let f = ScalarField::Bump {
            amplitude: 3.0,
            radius: 0.4,
            t_center: 0.5,
            center: vec![0.1, 0.0],
        };
        let e = ex(2.5, 2.5);
        let analytic = scalar_norm(&f, &e, None).unwrap();
        assert_eq!(analytic.method, NormMethod::Analytic);
        let grid = SpaceTimeGrid::new(0.0, 1.0, 200, 0.6, 200, 2).unwrap();
        let g = GridField::from_scalar(grid, &f).unwrap();
        assert_relative_eq!(compute_mixed_norm(&g, &e).unwrap(), analytic.value, max_relative = 1e-6);
        let sup = scalar_norm(&f, &ex(f64::INFINITY, f64::INFINITY), None).unwrap().value;
        assert_relative_eq!(sup, 3.0 * (-1.0f64).exp());
    }

    #[test]
    fn grid_locate_inverts_midpoints() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 5, 2.0, 7, 2).unwrap();
        let mut x = [0.0; 2];
        for it in 0..g.n_t {
            for ix in 0..g.n_spatial() {
                g.x_mid(ix, &mut x);
                assert_eq!(g.locate(g.t_mid(it), &x), Some(it * g.n_spatial() + ix));
            }
        }
        assert_eq!(g.locate(1.0, &[2.0, -2.0]), Some(4 * 49 + 6));
        assert_eq!(g.locate(1.01, &[0.0, 0.0]), None);
        assert_eq!(g.locate(0.5, &[0.0, 2.5]), None);
    }

    #[test]
    fn grid_field_rejects_non_finite() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 2, 1.0, 2, 2).unwrap();
        assert!(GridField::from_fn(g, |_, _| f64::INFINITY).is_err());
        assert!(SpaceTimeGrid::new(0.0, 1.0, 1, 1.0, 2, 2).is_err());
        assert!(SpaceTimeGrid::new(0.0, 1.0, 2, 0.0, 2, 2).is_err());
    }
}
