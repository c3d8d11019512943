//! Sample statistics with summation order fixed by sample index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64, samples: usize) -> Self {
        Self {
            value,
            standard_error: 0.0,
            samples,
        }
    }

    /// `|value - target| <= k * standard_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.standard_error
    }
}

/// Pairwise summation; the result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Sample mean with the classical standard error `s / sqrt(n)`.
pub fn mean_estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return Estimate::exact(m, n);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    let var = pairwise_sum(&dev) / (n as f64 - 1.0);
    Estimate {
        value: m,
        standard_error: (var / n as f64).sqrt(),
        samples: n,
    }
}

/// Sample mean with the leave-one-out jackknife standard error.
pub fn jackknife_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    let total = pairwise_sum(values);
    let m = total / n as f64;
    if n < 2 {
        return Estimate::exact(m, n);
    }
    let nf = n as f64;
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (nf - 1.0)).collect();
    let loo_mean = mean(&loo);
    let dev: Vec<f64> = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).collect();
    let var = (nf - 1.0) / nf * pairwise_sum(&dev);
    Estimate {
        value: m,
        standard_error: var.sqrt(),
        samples: n,
    }
}

/// Linear-interpolation quantile of an already sorted sample.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = level.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantile(values: &[f64], level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, level)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Bootstrap standard error of a sample quantile.
pub fn bootstrap_quantile_se(values: &[f64], level: f64, resamples: usize, seed: u64) -> f64 {
    let n = values.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n];
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = values[rng.random_range(0..n)];
            }
            buf.sort_by(f64::total_cmp);
            quantile_sorted(&buf, level)
        })
        .collect();
    let m = mean(&stats);
    let dev: Vec<f64> = stats.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&dev) / (resamples as f64 - 1.0)).sqrt()
}

/// Ordinary least squares `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    LinearFit {
        intercept: my - slope * mx,
        slope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jackknife_matches_classical_se_for_the_mean() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let a = mean_estimate(&v);
        let b = jackknife_mean(&v);
        assert_relative_eq!(a.value, b.value, max_relative = 1e-14);
        assert_relative_eq!(a.standard_error, b.standard_error, max_relative = 1e-10);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let v: Vec<f64> = (0..200).map(|i| (i as f64).sqrt()).collect();
        let a = bootstrap_quantile_se(&v, 0.5, 100, 3);
        let b = bootstrap_quantile_se(&v, 0.5, 100, 3);
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y);
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-14);
        assert_relative_eq!(f.intercept, 1.0, max_relative = 1e-14);
    }
}
