use lpq_core::stats::quantile;
use lpq_core::{
    estimate_ab, increment_moment, ladder_experiment, simulate, singular_cost, weighted_functional, DiffusionSpec,
    DriftField, Estimate, MixedExponents, PathEnsemble, ScalarField, SemimartingaleWeights, SingularDrift,
    SolverConfig, TruncationLadder,
};

/// Composite Simpson rule with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn run(drift: DriftField, n_steps: usize, n_paths: usize, seed: u64) -> PathEnsemble {
    let cfg = SolverConfig::new(1.0, n_steps, n_paths, seed, vec![0.0, 0.0]);
    simulate(&DiffusionSpec::identity(), &drift, &cfg).unwrap()
}

fn assert_within(e: Estimate, target: f64, slack: f64) {
    let tol = 3.0 * e.standard_error + slack;
    assert!(
        (e.value - target).abs() <= tol,
        "{} ± {} vs {target}",
        e.value,
        e.standard_error
    );
}

#[test]
fn brownian_second_moment_scales_linearly() {
    let ens = run(DriftField::Zero, 400, 20_000, 21);
    let base = increment_moment(&ens, 2, 0.0, 0.25).unwrap();
    for c in [2.0, 4.0] {
        let scaled = increment_moment(&ens, 2, 0.0, 0.25 * c).unwrap();
        let diff = scaled.value - c * base.value;
        let se = (scaled.standard_error.powi(2) + (c * base.standard_error).powi(2)).sqrt();
        assert!(diff.abs() <= 3.0 * se, "c = {c}: {diff} vs 3·{se}");
    }
}

#[test]
fn brownian_increment_moments() {
    let ens = run(DriftField::Zero, 200, 20_000, 22);
    for (s, t) in [(0.0, 1.0), (0.1, 0.3), (0.25, 0.75), (0.5, 1.0)] {
        assert_within(increment_moment(&ens, 2, s, t).unwrap(), 2.0 * (t - s), 0.0);
    }
    assert_within(increment_moment(&ens, 4, 0.0, 1.0).unwrap(), 8.0, 0.0);
    assert_eq!(increment_moment(&ens, 2, 0.5, 0.5).unwrap().value, 0.0);
}

#[test]
fn weighted_ball_indicator_matches_chi_square_quadrature() {
    let ens = run(DriftField::Zero, 1000, 20_000, 23);
    let e = MixedExponents::new(3.0, 3.0, 2).unwrap();
    let f = ScalarField::Ball {
        value: 1.0,
        t_start: 0.0,
        t_end: 1.0,
        center: vec![0.0, 0.0],
        radius: 1.0,
    };
    let report = weighted_functional(&ens, &SemimartingaleWeights::standard(1.0), &f, &e, None).unwrap();
    // |W_t|² / t is chi-square with two degrees of freedom.
    let integral = simpson(1e-12, 1.0, 2000, |t| 1.0 - (-1.0 / (2.0 * t)).exp());
    let oracle = 2f64.powf(-2.0 / 3.0) * integral;
    let est = Estimate {
        value: report.estimate,
        standard_error: report.standard_error,
        samples: report.n_paths,
    };
    assert_within(est, oracle, 0.0);
}

#[test]
fn ou_drift_mass_matches_rayleigh_quadrature() {
    let dt = 1e-3;
    let ens = run(DriftField::Linear { coef: -1.0 }, 1000, 10_000, 24);
    let (a, b) = estimate_ab(&ens, &SemimartingaleWeights::standard(1.0)).unwrap();
    assert!(a.standard_error < 1e-12);
    assert!((a.value - 1.0).abs() < 1e-12);
    // |x_t| is Rayleigh with scale sqrt(v_t), v_t = (1 - e^{-2t}) / 2.
    let oracle = simpson(0.0, 1.0, 200_000, |t| {
        let v = (1.0 - (-2.0 * t).exp()) / 2.0;
        (v * std::f64::consts::FRAC_PI_2).sqrt()
    });
    assert_within(b, oracle, 2.0 * dt);
}

#[test]
fn zero_level_reproduces_the_drift_free_cost() {
    let s = SingularDrift::new(0.5, 0.5).unwrap();
    let cfg = SolverConfig::new(1.0, 500, 400, 25, vec![0.0, 0.0]);
    let ladder = TruncationLadder::new(vec![10.0], cfg, s).unwrap();
    let report = ladder_experiment(&ladder).unwrap();
    assert_eq!(report.baseline.level, 0.0);
    assert_eq!(report.baseline.zero_occupancy, 0.0);

    let free = simulate(&DiffusionSpec::identity(), &DriftField::Zero, &ladder.config).unwrap();
    for (j, floor) in ladder.floors.iter().enumerate() {
        let costs = singular_cost(&free, &s, *floor).unwrap();
        assert_eq!(report.baseline.median_cost[j], quantile(&costs, 0.5));
    }
}

#[test]
fn drift_free_paths_never_sit_at_the_origin() {
    let ens = run(DriftField::Zero, 1000, 500, 26);
    for i in 0..ens.n_paths() {
        for k in 1..=ens.n_steps() {
            assert!(ens.state(i, k).iter().any(|v| *v != 0.0));
        }
    }
}
