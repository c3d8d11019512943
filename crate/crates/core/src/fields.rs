//! Drift and diffusion coefficients, and the scalar test functions integrated
//! along paths.
//!
//! Everything here is a closed catalog of analytic families; descriptors are
//! immutable once built and evaluate without allocation. Vector-valued
//! evaluations write into a caller-provided slice of length `d`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature::{unit_sphere_area, GaussLegendre};

/// Largest spatial dimension supported by the stack buffers used in
/// evaluation.
pub const MAX_DIM: usize = 8;

/// Tolerance on `alpha + beta = 1`.
const SUM_TOL: f64 = 1e-12;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sign convention of the singular drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Points toward the origin, the nonexistence example.
    #[default]
    Attracting,
    /// Points away from the origin; used as a control.
    Repelling,
}

/// `b(t, x) = ∓ t^{-α} |x|^{-β} x/|x|` on `{0 < |x| ≤ 1, 0 < t ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularDrift {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub orientation: Orientation,
}

impl SingularDrift {
    /// Requires `0 < alpha <= beta < 1` and `alpha + beta = 1`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self {
            alpha,
            beta,
            orientation: Orientation::Attracting,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.alpha, self.beta);
        if !(a > 0.0 && a <= b && b < 1.0) {
            return Err(LabError::InvalidField(format!(
                "singular drift needs 0 < alpha <= beta < 1, got alpha = {a}, beta = {b}"
            )));
        }
        if (a + b - 1.0).abs() > SUM_TOL {
            return Err(LabError::InvalidField(format!(
                "singular drift needs alpha + beta = 1, got {}",
                a + b
            )));
        }
        Ok(())
    }

    /// `t^{-α} |x|^{-β}` on the support, zero elsewhere.
    pub fn magnitude(&self, t: f64, r: f64) -> f64 {
        if t <= 0.0 || t > 1.0 || r <= 0.0 || r > 1.0 {
            0.0
        } else {
            t.powf(-self.alpha) * r.powf(-self.beta)
        }
    }

    /// Radius below which `|b(t, ·)| > level`, i.e. `(t^α M)^{-1/β}`.
    pub fn truncation_radius(&self, t: f64, level: f64) -> f64 {
        (t.powf(self.alpha) * level).powf(-1.0 / self.beta)
    }
}

/// Evaluates the singular drift at `(t, x)` into `out`.
///
/// Zero for `t ≤ 0`, `t > 1`, `x = 0` or `|x| > 1`.
pub fn eval_singular_drift(s: &SingularDrift, t: f64, x: &[f64], out: &mut [f64]) {
    let r = norm(x);
    let mag = s.magnitude(t, r);
    if mag == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let sign = match s.orientation {
        Orientation::Attracting => -1.0,
        Orientation::Repelling => 1.0,
    };
    let scale = sign * mag / r;
    for (o, xi) in out.iter_mut().zip(x) {
        *o = scale * xi;
    }
}

/// Vector fields used as drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftField {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `b(t, x) = coef · x`; `coef = -1` is the Ornstein–Uhlenbeck drift.
    Linear {
        coef: f64,
    },
    Singular(SingularDrift),
    /// `value · 1{|x| ≤ radius, t_start < t ≤ t_end}`.
    Cylinder {
        value: Vec<f64>,
        radius: f64,
        t_start: f64,
        t_end: f64,
    },
    /// `b · 1{|b| ≤ level}`.
    Truncated {
        base: Box<DriftField>,
        level: f64,
    },
    /// Space-time convolution with the scaled bump kernel.
    Mollified {
        base: Box<DriftField>,
        epsilon: f64,
    },
}

impl DriftField {
    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 || d > MAX_DIM {
            return Err(LabError::InvalidField(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        match self {
            DriftField::Zero => Ok(()),
            DriftField::Constant { value } | DriftField::Cylinder { value, .. } if value.len() != d => {
                Err(LabError::DimensionMismatch {
                    expected: d,
                    found: value.len(),
                })
            }
            DriftField::Constant { value } => finite_all(value, "constant drift"),
            DriftField::Linear { coef } => finite_all(&[*coef], "linear drift"),
            DriftField::Singular(s) => s.validate(),
            DriftField::Cylinder {
                value,
                radius,
                t_start,
                t_end,
            } => {
                finite_all(value, "cylinder drift")?;
                if !(*radius > 0.0) || !(t_end > t_start) {
                    return Err(LabError::InvalidField(
                        "cylinder drift needs radius > 0 and t_end > t_start".into(),
                    ));
                }
                Ok(())
            }
            DriftField::Truncated { base, level } => {
                if !(*level >= 0.0) {
                    return Err(LabError::InvalidField(format!(
                        "truncation level must be >= 0, got {level}"
                    )));
                }
                base.validate(d)
            }
            DriftField::Mollified { base, epsilon } => {
                if !(*epsilon > 0.0) {
                    return Err(LabError::InvalidField(format!(
                        "mollification scale must be > 0, got {epsilon}"
                    )));
                }
                base.validate(d)
            }
        }
    }

    /// Writes `b(t, x)` into `out`.
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            DriftField::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            DriftField::Constant { value } => out.copy_from_slice(value),
            DriftField::Linear { coef } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = coef * xi;
                }
            }
            DriftField::Singular(s) => eval_singular_drift(s, t, x, out),
            DriftField::Cylinder {
                value,
                radius,
                t_start,
                t_end,
            } => {
                if t > *t_start && t <= *t_end && norm(x) <= *radius {
                    out.copy_from_slice(value);
                } else {
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
            DriftField::Truncated { base, level } => {
                base.eval(t, x, out);
                if norm(out) > *level {
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
            DriftField::Mollified { base, epsilon } => {
                let d = x.len();
                let kernel = BumpKernel::for_dim(d + 1);
                let mut shifted = [0.0; MAX_DIM];
                let mut val = [0.0; MAX_DIM];
                out.iter_mut().for_each(|o| *o = 0.0);
                for (z, w) in kernel.points() {
                    for i in 0..d {
                        shifted[i] = x[i] - epsilon * z[i + 1];
                    }
                    base.eval(t - epsilon * z[0], &shifted[..d], &mut val[..d]);
                    for i in 0..d {
                        out[i] += w * val[i];
                    }
                }
            }
        }
    }

    /// `|b(t, x)|`.
    pub fn magnitude(&self, t: f64, x: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_DIM];
        let out = &mut buf[..x.len()];
        self.eval(t, x, out);
        norm(out)
    }

    /// Pointwise upper bound on `|b|`, when the family has one.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            DriftField::Zero => Some(0.0),
            DriftField::Constant { value } | DriftField::Cylinder { value, .. } => Some(norm(value)),
            DriftField::Linear { coef } if *coef == 0.0 => Some(0.0),
            DriftField::Linear { .. } | DriftField::Singular(_) => None,
            DriftField::Truncated { base, level } => Some(base.sup_bound().map_or(*level, |b| b.min(*level))),
            DriftField::Mollified { base, .. } => base.sup_bound(),
        }
    }
}

fn finite_all(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LabError::InvalidField(format!("{what} has non-finite entries")))
    }
}

/// `b · 1{|b| ≤ level}`. A level of zero removes the drift entirely.
pub fn truncate(b: DriftField, level: f64) -> DriftField {
    DriftField::Truncated {
        base: Box::new(b),
        level,
    }
}

/// `b ∗ ζ_ε` with `ζ_ε(t, x) = ε^{-(d+1)} ζ(t/ε, x/ε)`.
pub fn mollify(b: DriftField, epsilon: f64) -> DriftField {
    DriftField::Mollified {
        base: Box::new(b),
        epsilon,
    }
}

/// Nonnegative scalar functions on space-time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Zero,
    Constant {
        value: f64,
    },
    /// `value` on `[t_start, t_end) × Π [lower_i, upper_i]`.
    Box {
        value: f64,
        t_start: f64,
        t_end: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `value` on `[t_start, t_end) × {|x - center| ≤ radius}`.
    Ball {
        value: f64,
        t_start: f64,
        t_end: f64,
        center: Vec<f64>,
        radius: f64,
    },
    /// `amplitude · exp(-|x - center|² / (2 width²))` on `[t_start, t_end)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
        t_start: f64,
        t_end: f64,
    },
    /// `amplitude · bump((t - t_center, x - center) / radius)`, a smooth
    /// space-time bump on the ball of the given radius in ℝ^{d+1}.
    Bump {
        amplitude: f64,
        radius: f64,
        t_center: f64,
        center: Vec<f64>,
    },
    /// `scale · |b(t, x)|`.
    DriftMagnitude {
        drift: DriftField,
        #[serde(default = "one")]
        scale: f64,
    },
    /// The base field restricted to `[t_start, t_end)`.
    Windowed {
        base: Box<ScalarField>,
        t_start: f64,
        t_end: f64,
    },
    Mollified {
        base: Box<ScalarField>,
        epsilon: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ScalarField {
    pub fn validate(&self, d: usize) -> Result<()> {
        let check_dim = |v: &[f64]| {
            if v.len() == d {
                Ok(())
            } else {
                Err(LabError::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                })
            }
        };
        match self {
            ScalarField::Zero => Ok(()),
            ScalarField::Constant { value } => finite_all(&[*value], "constant field"),
            ScalarField::Box { lower, upper, .. } => {
                check_dim(lower)?;
                check_dim(upper)?;
                if lower.iter().zip(upper).any(|(l, u)| !(u >= l)) {
                    return Err(LabError::InvalidField("box needs lower <= upper".into()));
                }
                Ok(())
            }
            ScalarField::Ball { center, radius, .. } => {
                check_dim(center)?;
                if !(*radius >= 0.0) {
                    return Err(LabError::InvalidField("ball radius must be >= 0".into()));
                }
                Ok(())
            }
            ScalarField::Gaussian { center, width, .. } => {
                check_dim(center)?;
                if !(*width > 0.0) {
                    return Err(LabError::InvalidField("gaussian width must be > 0".into()));
                }
                Ok(())
            }
            ScalarField::Bump {
                amplitude,
                radius,
                t_center,
                center,
            } => {
                check_dim(center)?;
                finite_all(&[*amplitude, *t_center], "bump")?;
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(LabError::InvalidField("bump radius must be > 0".into()));
                }
                Ok(())
            }
            ScalarField::DriftMagnitude { drift, scale } => {
                finite_all(&[*scale], "drift magnitude scale")?;
                drift.validate(d)
            }
            ScalarField::Windowed { base, .. } => base.validate(d),
            ScalarField::Mollified { base, epsilon } => {
                if !(*epsilon > 0.0) {
                    return Err(LabError::InvalidField(format!(
                        "mollification scale must be > 0, got {epsilon}"
                    )));
                }
                base.validate(d)
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant { value } => *value,
            ScalarField::Box {
                value,
                t_start,
                t_end,
                lower,
                upper,
            } => {
                let inside = t >= *t_start
                    && t < *t_end
                    && x.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(xi, (l, u))| xi >= l && xi <= u);
                if inside {
                    *value
                } else {
                    0.0
                }
            }
            ScalarField::Ball {
                value,
                t_start,
                t_end,
                center,
                radius,
            } => {
                if t >= *t_start && t < *t_end && dist2(x, center) <= radius * radius {
                    *value
                } else {
                    0.0
                }
            }
            ScalarField::Gaussian {
                amplitude,
                width,
                center,
                t_start,
                t_end,
            } => {
                if t >= *t_start && t < *t_end {
                    amplitude * (-dist2(x, center) / (2.0 * width * width)).exp()
                } else {
                    0.0
                }
            }
            ScalarField::Bump {
                amplitude,
                radius,
                t_center,
                center,
            } => {
                let r2 = ((t - t_center) * (t - t_center) + dist2(x, center)) / (radius * radius);
                if r2 >= 1.0 {
                    0.0
                } else {
                    amplitude * (-1.0 / (1.0 - r2)).exp()
                }
            }
            ScalarField::DriftMagnitude { drift, scale } => scale * drift.magnitude(t, x),
            ScalarField::Windowed { base, t_start, t_end } => {
                if t >= *t_start && t < *t_end {
                    base.eval(t, x)
                } else {
                    0.0
                }
            }
            ScalarField::Mollified { base, epsilon } => {
                let d = x.len();
                let kernel = BumpKernel::for_dim(d + 1);
                let mut shifted = [0.0; MAX_DIM];
                let mut acc = 0.0;
                for (z, w) in kernel.points() {
                    for i in 0..d {
                        shifted[i] = x[i] - epsilon * z[i + 1];
                    }
                    acc += w * base.eval(t - epsilon * z[0], &shifted[..d]);
                }
                acc
            }
        }
    }

    /// Restriction to `[t_start, t_end)`.
    pub fn windowed(self, t_start: f64, t_end: f64) -> ScalarField {
        ScalarField::Windowed {
            base: Box::new(self),
            t_start,
            t_end,
        }
    }

    pub fn mollified(self, epsilon: f64) -> ScalarField {
        ScalarField::Mollified {
            base: Box::new(self),
            epsilon,
        }
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Nodes per axis of the discrete mollifier. Even, so the kernel never
/// samples its own center plane.
pub const KERNEL_NODES_PER_AXIS: usize = 8;

/// Discretized bump `c · exp(-1/(1-|z|²))` on the unit ball of ℝ^n.
///
/// The midpoint nodes inside the ball carry weights proportional to the bump
/// and summing to one, so the discrete convolution preserves constants.
#[derive(Debug)]
pub struct BumpKernel {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl BumpKernel {
    pub fn new(dim: usize) -> Self {
        let m = KERNEL_NODES_PER_AXIS;
        let h = 2.0 / m as f64;
        let total = m.pow(dim as u32);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut z = vec![0.0; dim];
        for flat in 0..total {
            let mut rem = flat;
            for zi in z.iter_mut() {
                *zi = -1.0 + h * (rem % m) as f64 + 0.5 * h;
                rem /= m;
            }
            let w = bump(&z);
            if w > 0.0 {
                nodes.extend_from_slice(&z);
                weights.push(w);
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Self { dim, nodes, weights }
    }

    /// Shared kernel for `dim` = d + 1.
    pub fn for_dim(dim: usize) -> &'static BumpKernel {
        static KERNELS: [OnceLock<BumpKernel>; MAX_DIM + 2] = [const { OnceLock::new() }; MAX_DIM + 2];
        KERNELS[dim].get_or_init(|| BumpKernel::new(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(node, weight)` pairs; nodes are `(s, y)` with `s` the time offset.
    pub fn points(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Unnormalized bump `exp(-1/(1-|z|²))`, zero off the open unit ball.
pub fn bump(z: &[f64]) -> f64 {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// `c` such that `c · bump` has unit integral over ℝ^dim.
pub fn bump_normalization(dim: usize) -> f64 {
    let rule = GaussLegendre::new(20);
    let radial = rule.composite(0.0, 1.0, 64, |r| r.powi(dim as i32 - 1) * (-1.0 / (1.0 - r * r)).exp());
    1.0 / (unit_sphere_area(dim) * radial)
}

/// Matrix families for `σ(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionMatrix {
    Identity,
    /// `scale · I`.
    Scalar {
        scale: f64,
    },
    Diagonal {
        entries: Vec<f64>,
    },
    /// Constant matrix given by rows.
    Constant {
        rows: Vec<Vec<f64>>,
    },
    /// `I · (1 + amplitude · sin|x|)`.
    Oscillating {
        amplitude: f64,
    },
}

/// A diffusion coefficient with its nondegeneracy constant `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub delta: f64,
    pub matrix: DiffusionMatrix,
}

impl DiffusionSpec {
    pub fn new(delta: f64, matrix: DiffusionMatrix) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(LabError::InvalidField(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { delta, matrix })
    }

    pub fn identity() -> Self {
        Self {
            delta: 0.5,
            matrix: DiffusionMatrix::Identity,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.matrix, DiffusionMatrix::Identity)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LabError::InvalidField(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        match &self.matrix {
            DiffusionMatrix::Diagonal { entries } if entries.len() != d => Err(LabError::DimensionMismatch {
                expected: d,
                found: entries.len(),
            }),
            DiffusionMatrix::Constant { rows } if rows.len() != d || rows.iter().any(|r| r.len() != d) => {
                Err(LabError::InvalidField(format!("diffusion matrix must be {d}x{d}")))
            }
            _ => Ok(()),
        }
    }

    /// Writes `σ(t, x)` row-major into `out` (length `d²`).
    pub fn matrix_at(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.matrix {
            DiffusionMatrix::Identity => (0..d).for_each(|i| out[i * d + i] = 1.0),
            DiffusionMatrix::Scalar { scale } => (0..d).for_each(|i| out[i * d + i] = *scale),
            DiffusionMatrix::Diagonal { entries } => (0..d).for_each(|i| out[i * d + i] = entries[i]),
            DiffusionMatrix::Constant { rows } => {
                for (i, row) in rows.iter().enumerate() {
                    out[i * d..(i + 1) * d].copy_from_slice(row);
                }
            }
            DiffusionMatrix::Oscillating { amplitude } => {
                let s = 1.0 + amplitude * norm(x).sin();
                (0..d).for_each(|i| out[i * d + i] = s);
            }
        }
    }

    /// Writes `σ(t, x) · dw` into `out`.
    pub fn apply(&self, t: f64, x: &[f64], dw: &[f64], out: &mut [f64]) {
        let d = x.len();
        match &self.matrix {
            DiffusionMatrix::Identity => out.copy_from_slice(dw),
            DiffusionMatrix::Scalar { scale } => {
                for (o, w) in out.iter_mut().zip(dw) {
                    *o = scale * w;
                }
            }
            DiffusionMatrix::Oscillating { amplitude } => {
                let s = 1.0 + amplitude * norm(x).sin();
                for (o, w) in out.iter_mut().zip(dw) {
                    *o = s * w;
                }
            }
            DiffusionMatrix::Diagonal { entries } => {
                for i in 0..d {
                    out[i] = entries[i] * dw[i];
                }
            }
            DiffusionMatrix::Constant { .. } => {
                let mut m = [0.0; MAX_DIM * MAX_DIM];
                self.matrix_at(t, x, &mut m[..d * d]);
                for i in 0..d {
                    out[i] = (0..d).map(|j| m[i * d + j] * dw[j]).sum();
                }
            }
        }
    }

    /// `(det a, tr a)` for `a = σσᵀ/2`.
    pub fn half_covariance_det_trace(&self, t: f64, x: &[f64]) -> (f64, f64) {
        let d = x.len();
        let half_pow = 0.5f64.powi(d as i32);
        match &self.matrix {
            DiffusionMatrix::Identity => (half_pow, 0.5 * d as f64),
            DiffusionMatrix::Scalar { scale } => {
                let s2 = scale * scale;
                (half_pow * s2.powi(d as i32), 0.5 * d as f64 * s2)
            }
            DiffusionMatrix::Oscillating { amplitude } => {
                let s = 1.0 + amplitude * norm(x).sin();
                let s2 = s * s;
                (half_pow * s2.powi(d as i32), 0.5 * d as f64 * s2)
            }
            DiffusionMatrix::Diagonal { entries } => {
                let det: f64 = entries.iter().map(|e| e * e).product();
                let tr: f64 = entries.iter().map(|e| e * e).sum();
                (half_pow * det, 0.5 * tr)
            }
            DiffusionMatrix::Constant { .. } => {
                let mut m = vec![0.0; d * d];
                self.matrix_at(t, x, &mut m);
                let sigma = DMatrix::from_row_slice(d, d, &m);
                let a = &sigma * sigma.transpose() * 0.5;
                (a.determinant(), a.trace())
            }
        }
    }
}

/// Outcome of [`validate_diffusion`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionCheck {
    pub passed: bool,
    /// Eigenvalue closest to (or farthest beyond) the band `[δ, 1/δ]`.
    pub worst_eigenvalue: f64,
    pub worst_point: (f64, Vec<f64>),
    pub max_asymmetry: f64,
}

const SPECTRUM_TOL: f64 = 1e-12;

/// Checks symmetry and the spectral band `[δ, 1/δ]` at every sample point.
pub fn validate_diffusion(spec: &DiffusionSpec, sample: &[(f64, Vec<f64>)]) -> Result<DiffusionCheck> {
    if sample.is_empty() {
        return Err(LabError::InvalidArgument(
            "diffusion check needs at least one sample point".into(),
        ));
    }
    let lo = spec.delta;
    let hi = 1.0 / spec.delta;
    let mut passed = true;
    let mut worst = (f64::NEG_INFINITY, f64::NAN, (0.0, Vec::new()));
    let mut max_asym: f64 = 0.0;
    for (t, x) in sample {
        let d = x.len();
        spec.validate(d)?;
        let mut m = vec![0.0; d * d];
        spec.matrix_at(*t, x, &mut m);
        let mat = DMatrix::from_row_slice(d, d, &m);
        let asym = (&mat - mat.transpose()).norm();
        max_asym = max_asym.max(asym);
        if asym > SPECTRUM_TOL {
            passed = false;
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        for &lambda in eig.eigenvalues.iter() {
            let violation = (lo - lambda).max(lambda - hi);
            if violation > SPECTRUM_TOL {
                passed = false;
            }
            if violation > worst.0 {
                worst = (violation, lambda, (*t, x.clone()));
            }
        }
    }
    Ok(DiffusionCheck {
        passed,
        worst_eigenvalue: worst.1,
        worst_point: worst.2,
        max_asymmetry: max_asym,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sd(a: f64, b: f64) -> SingularDrift {
        SingularDrift::new(a, b).unwrap()
    }

    #[test]
    fn singular_drift_values() {
        let s = sd(0.5, 0.5);
        let mut out = [0.0; 2];
        eval_singular_drift(&s, 1.0, &[1.0, 0.0], &mut out);
        assert_eq!(out, [-1.0, 0.0]);
        eval_singular_drift(&s, 0.25, &[0.25, 0.0], &mut out);
        assert_relative_eq!(out[0], -4.0, max_relative = 1e-14);
        assert_eq!(out[1], 0.0);
        eval_singular_drift(&s, 0.5, &[2.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        eval_singular_drift(&s, 0.5, &[0.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        eval_singular_drift(&s, 0.0, &[0.5, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        eval_singular_drift(&s, 1.5, &[0.5, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn singular_drift_rejects_bad_exponents() {
        assert!(SingularDrift::new(0.6, 0.4).is_err());
        assert!(SingularDrift::new(0.3, 0.6).is_err());
        assert!(SingularDrift::new(0.0, 1.0).is_err());
        assert!(SingularDrift::new(1.0 / 3.0, 2.0 / 3.0).is_ok());
    }

    #[test]
    fn singular_drift_magnitude_and_direction() {
        let s = sd(0.4, 0.6);
        let mut out = [0.0; 3];
        let x = [0.1, -0.3, 0.2];
        let t = 0.37;
        eval_singular_drift(&s, t, &x, &mut out);
        let r = norm(&x);
        assert_relative_eq!(norm(&out), t.powf(-0.4) * r.powf(-0.6), max_relative = 1e-12);
        let dir: Vec<f64> = out.iter().map(|o| o / norm(&out)).collect();
        for i in 0..3 {
            assert!((dir[i] + x[i] / r).abs() < 1e-12);
        }
        let rep = s.with_orientation(Orientation::Repelling);
        let mut out2 = [0.0; 3];
        eval_singular_drift(&rep, t, &x, &mut out2);
        for i in 0..3 {
            assert_eq!(out2[i], -out[i]);
        }
    }

    #[test]
    fn truncation_kills_large_values() {
        let b = DriftField::Constant { value: vec![3.0, 4.0] };
        assert_eq!(truncate(b.clone(), 3.0).magnitude(0.0, &[0.0, 0.0]), 0.0);
        assert_eq!(truncate(b.clone(), 6.0).magnitude(0.0, &[0.0, 0.0]), 5.0);
        let zero = truncate(DriftField::Singular(sd(0.5, 0.5)), 0.0);
        assert_eq!(zero.magnitude(0.5, &[0.3, 0.1]), 0.0);
    }

    #[test]
    fn truncated_singular_support_matches_radius() {
        let s = sd(0.5, 0.5);
        let level = 10.0;
        let b = truncate(DriftField::Singular(s), level);
        for &t in &[0.05, 0.3, 0.9] {
            let rho = s.truncation_radius(t, level);
            // just outside the critical radius the drift survives
            let outside = (rho * 1.01).min(1.0);
            if rho < 1.0 {
                assert!(b.magnitude(t, &[outside, 0.0]) > 0.0);
                assert!(b.magnitude(t, &[outside, 0.0]) <= level);
            }
            assert_eq!(b.magnitude(t, &[rho * 0.99, 0.0]), 0.0);
        }
    }

    #[test]
    fn kernel_weights_are_a_probability_vector() {
        let k = BumpKernel::for_dim(3);
        let s: f64 = k.points().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(k
            .points()
            .all(|(z, w)| w > 0.0 && z.iter().map(|v| v * v).sum::<f64>() < 1.0));
        // symmetric under s -> -s
        let first: f64 = k.points().map(|(z, w)| w * z[0]).sum();
        assert!(first.abs() < 1e-15);
    }

    #[test]
    fn kernel_normalization_has_unit_integral() {
        // fine midpoint rule on the normalized continuous bump
        for dim in [2usize, 3] {
            let c = bump_normalization(dim);
            let m: usize = if dim == 2 { 400 } else { 80 };
            let h = 2.0 / m as f64;
            let mut z = vec![0.0; dim];
            let mut acc = 0.0;
            for flat in 0..m.pow(dim as u32) {
                let mut rem = flat;
                for zi in z.iter_mut() {
                    *zi = -1.0 + h * ((rem % m) as f64 + 0.5);
                    rem /= m;
                }
                acc += bump(&z);
            }
            acc *= c * h.powi(dim as i32);
            assert!((acc - 1.0).abs() < 1e-8, "dim {dim}: {acc}");
        }
    }

    #[test]
    fn mollifier_preserves_constants_and_halves_a_step() {
        let c = ScalarField::Constant { value: 2.5 }.mollified(0.3);
        assert_relative_eq!(c.eval(0.1, &[0.2, -0.4]), 2.5, max_relative = 1e-14);
        let step = ScalarField::Box {
            value: 1.0,
            t_start: 0.0,
            t_end: f64::INFINITY,
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![f64::INFINITY; 2],
        };
        for eps in [0.01, 0.5, 3.0] {
            let m = step.clone().mollified(eps);
            assert_relative_eq!(m.eval(0.0, &[0.3, 0.7]), 0.5, max_relative = 1e-12);
        }
        let drift = mollify(DriftField::Constant { value: vec![1.0, -2.0] }, 0.2);
        let mut out = [0.0; 2];
        drift.eval(0.0, &[0.0, 0.0], &mut out);
        assert_relative_eq!(out[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(out[1], -2.0, max_relative = 1e-14);
    }

    #[test]
    fn diffusion_checks() {
        let pts: Vec<(f64, Vec<f64>)> = (0..50)
            .map(|i| (0.1 * i as f64, vec![0.13 * i as f64, -0.07 * i as f64]))
            .collect();
        let id = DiffusionSpec::new(0.5, DiffusionMatrix::Identity).unwrap();
        assert!(validate_diffusion(&id, &pts).unwrap().passed);

        let diag = DiffusionSpec::new(
            0.5,
            DiffusionMatrix::Diagonal {
                entries: vec![0.3, 1.0],
            },
        )
        .unwrap();
        let chk = validate_diffusion(&diag, &pts).unwrap();
        assert!(!chk.passed);
        assert_relative_eq!(chk.worst_eigenvalue, 0.3, max_relative = 1e-12);

        let osc = DiffusionSpec::new(0.5, DiffusionMatrix::Oscillating { amplitude: 0.4 }).unwrap();
        // extremes of sin|x| at |x| = π/2 and 3π/2
        let mut extreme = pts.clone();
        extreme.push((0.0, vec![std::f64::consts::FRAC_PI_2, 0.0]));
        extreme.push((0.0, vec![0.0, 3.0 * std::f64::consts::FRAC_PI_2]));
        let chk = validate_diffusion(&osc, &extreme).unwrap();
        assert!(chk.passed);
        assert!(chk.worst_eigenvalue >= 0.6 - 1e-12 && chk.worst_eigenvalue <= 1.4 + 1e-12);

        let asym = DiffusionSpec::new(
            0.5,
            DiffusionMatrix::Constant {
                rows: vec![vec![1.0, 0.1], vec![0.0, 1.0]],
            },
        )
        .unwrap();
        assert!(!validate_diffusion(&asym, &pts).unwrap().passed);
        assert!(validate_diffusion(&id, &[]).is_err());
    }

    #[test]
    fn half_covariance_of_constant_matrix() {
        let spec = DiffusionSpec::new(
            0.2,
            DiffusionMatrix::Constant {
                rows: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
            },
        )
        .unwrap();
        let (det, tr) = spec.half_covariance_det_trace(0.0, &[0.0, 0.0]);
        // det(σ)² / 4 and (Σ σ_ij²) / 2
        assert_relative_eq!(det, (2.0f64 - 0.25).powi(2) / 4.0, max_relative = 1e-12);
        assert_relative_eq!(tr, (4.0 + 0.25 + 0.25 + 1.0) / 2.0, max_relative = 1e-12);
    }
}
