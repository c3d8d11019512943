//! One-dimensional Gauss–Legendre rules and a few closed-form integrals over
//! balls and time intervals.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * z);
        }
        acc * half
    }

    /// Composite rule with `panels` equal panels on `[a, b]`.
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + h * i as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Γ(d/2) for a positive integer `d`.
pub fn gamma_half(d: usize) -> f64 {
    assert!(d >= 1);
    let (mut g, mut x) = if d % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = d as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere in ℝ^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d)
}

/// Volume of the unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    unit_sphere_area(d) / d as f64
}

/// `∫_{r0 < |x| < r1} |x|^{-gamma} dx` in ℝ^d; `+∞` when divergent.
pub fn radial_power_integral(d: usize, gamma: f64, r0: f64, r1: f64) -> f64 {
    if r1 <= r0 {
        return 0.0;
    }
    unit_sphere_area(d) * power_integral(gamma + 1.0 - d as f64, r0, r1)
}

/// `∫_{a}^{b} s^{-a_exp} ds` for `0 ≤ a < b`; `+∞` when divergent at zero.
pub fn power_integral(exponent: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let k = 1.0 - exponent;
    if k.abs() < 1e-14 {
        if a == 0.0 {
            f64::INFINITY
        } else {
            (b / a).ln()
        }
    } else if k < 0.0 && a == 0.0 {
        f64::INFINITY
    } else {
        (b.powf(k) - a.powf(k)) / k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(6);
        // degree 11 is the highest exact degree
        let v = rule.integrate(0.0, 2.0, |x| x.powi(11) + 3.0 * x * x);
        assert_relative_eq!(v, 2f64.powi(12) / 12.0 + 8.0, max_relative = 1e-13);
        let w: f64 = rule.weights.iter().sum();
        assert_relative_eq!(w, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn ball_and_sphere_constants() {
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(2), PI, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(4), PI * PI / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn power_integrals() {
        assert_relative_eq!(power_integral(0.5, 0.0, 1.0), 2.0, max_relative = 1e-14);
        assert!(power_integral(1.0, 0.0, 1.0).is_infinite());
        assert!(power_integral(1.5, 0.0, 1.0).is_infinite());
        assert_relative_eq!(power_integral(1.0, 0.5, 1.0), 2f64.ln(), max_relative = 1e-14);
        // ∫_{B_1} |x|^{-5/3} dx in the plane = 2π / (1/3)
        assert_relative_eq!(
            radial_power_integral(2, 5.0 / 3.0, 0.0, 1.0),
            6.0 * PI,
            max_relative = 1e-12
        );
    }
}
