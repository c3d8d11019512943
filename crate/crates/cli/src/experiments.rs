//! One function per experiment kind. Each returns the tables and plot data
//! it produced; writing them is the caller's job.

use lpq_core::mixed_norm::{drift_norm, scalar_norm, subcriticality, NormMethod};
use lpq_core::occupation::{estimate_ab, estimate_occupation, green_density, weighted_functional};
use lpq_core::sde_solver::map_paths;
use lpq_core::stats::mean_estimate;
use lpq_core::tightness::{build_time_change, convergence_diagnostic, moment_bound_check, Coefficients};
use lpq_core::{
    ladder_experiment, mollify, simulate, truncate, LabError, LevelSummary, Orientation, Regime, Simulation,
    SingularDrift, TruncationLadder,
};

use crate::config::{ConfigError, ExperimentConfig as Cfg, ExperimentKind, Sequence};
use crate::output::{float, opt_float, PlotData, Table};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidExponents(_)
            | LabError::InvalidGrid(_)
            | LabError::InvalidField(_)
            | LabError::InvalidConfig(_)
            | LabError::InvalidArgument(_)
            | LabError::WrongBranch { .. }
            | LabError::Supercritical { .. }
            | LabError::OffGrid(_)
            | LabError::DimensionMismatch { .. } => RunError::Config(ConfigError(e.to_string())),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Default)]
pub struct Outputs {
    pub tables: Vec<Table>,
    pub plots: Vec<PlotData>,
    /// Human-readable summary lines for stdout.
    pub summary: Vec<String>,
}

pub fn run(kind: ExperimentKind, cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    match kind {
        ExperimentKind::Norm => norm(cfg),
        ExperimentKind::Simulate => simulate_summary(cfg, seed),
        ExperimentKind::Occupation => occupation(cfg, seed),
        ExperimentKind::Green => green(cfg, seed),
        ExperimentKind::Nonexistence => nonexistence(cfg, seed),
        ExperimentKind::Tightness => tightness(cfg, seed),
        ExperimentKind::Converge => converge(cfg, seed),
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Critical => "critical",
        Regime::Subcritical => "subcritical",
        Regime::Supercritical => "supercritical",
    }
}

fn method_name(m: NormMethod) -> &'static str {
    match m {
        NormMethod::Analytic => "analytic",
        NormMethod::Grid => "grid",
    }
}

fn norm(cfg: &Cfg) -> Result<Outputs, RunError> {
    let e = Cfg::require(&cfg.exponents, "exponents")?;
    e.validate()?;
    let mut out = Outputs::default();
    let mut t = Table::new("norm", &["object", "p", "q", "d", "theta", "regime", "norm", "method"]);
    let (theta, regime) = subcriticality(e);
    let regime = regime_name(regime);
    let mut push = |object: &str, value: f64, method: NormMethod, out: &mut Outputs| {
        out.summary.push(format!(
            "theta = {theta}, regime {regime}, ||{object}||_{{{},{}}} = {value} ({})",
            e.p,
            e.q,
            method_name(method)
        ));
        t.push(vec![
            object.to_string(),
            float(e.p),
            float(e.q),
            e.d.to_string(),
            float(theta),
            regime.to_string(),
            float(value),
            method_name(method).to_string(),
        ]);
    };
    if cfg.drift.is_none() && cfg.field.is_none() {
        return Err(ConfigError("norm needs a [drift] or a [field] section".into()).into());
    }
    if let Some(b) = &cfg.drift {
        let n = drift_norm(b, e, cfg.grid.as_ref())?;
        push("b", n.value, n.method, &mut out);
    }
    if let Some(f) = &cfg.field {
        let n = scalar_norm(f, e, cfg.grid.as_ref())?;
        push("f", n.value, n.method, &mut out);
    }
    out.tables.push(t);
    Ok(out)
}

fn simulation(cfg: &Cfg, seed: u64) -> Result<Simulation, RunError> {
    Ok(Simulation::new(
        cfg.sigma_or_identity(),
        cfg.drift_or_zero(),
        cfg.solver_config(seed)?,
    )?)
}

fn simulate_summary(cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    let sim = simulation(cfg, seed)?;
    let section = cfg.simulate.clone().unwrap_or(crate::config::SimulateSection {
        report_every: 10,
        dump_paths: false,
    });
    if section.report_every == 0 {
        return Err(ConfigError("[simulate] report_every must be >= 1".into()).into());
    }
    let c = &sim.config;
    let d = c.dim();
    let nodes: Vec<usize> = (0..=c.n_steps)
        .filter(|k| k % section.report_every == 0 || *k == c.n_steps)
        .collect();
    // Per path: coordinates, |x|², |x|⁴ at every reported node.
    let width = d + 2;
    let per_path = map_paths(&sim, |p| {
        let mut v = Vec::with_capacity(nodes.len() * width);
        for &k in &nodes {
            let x = p.state(k);
            let r2: f64 = x.iter().map(|a| a * a).sum();
            v.extend_from_slice(x);
            v.push(r2);
            v.push(r2 * r2);
        }
        Ok(v)
    })?;
    let column = |j: usize| per_path.iter().map(|v| v[j]).collect::<Vec<f64>>();
    let mut columns = vec!["step".to_string(), "time".to_string()];
    columns.extend((1..=d).map(|i| format!("mean_x{i}")));
    columns.extend(["mean_sq", "mean_sq_se", "mean_fourth", "mean_fourth_se"].map(String::from));
    let mut t = Table::with_columns("simulate", columns);
    let mut plot = PlotData {
        name: "simulate_mean_sq".into(),
        x_label: "time".into(),
        y_label: "mean_sq".into(),
        points: Vec::new(),
    };
    for (row, &k) in nodes.iter().enumerate() {
        let base = row * width;
        let time = c.t0 + c.time(k);
        let mut r = vec![k.to_string(), float(time)];
        for i in 0..d {
            r.push(float(mean_estimate(&column(base + i)).value));
        }
        let sq = mean_estimate(&column(base + d));
        let fourth = mean_estimate(&column(base + d + 1));
        r.extend([sq.value, sq.standard_error, fourth.value, fourth.standard_error].map(float));
        t.push(r);
        plot.points.push((time, sq.value));
    }
    let mut out = Outputs::default();
    let last = t.rows.last().cloned().unwrap_or_default();
    out.summary.push(format!(
        "{} paths, {} steps; E|x_T|^2 = {}",
        c.n_paths,
        c.n_steps,
        last.get(2 + d).cloned().unwrap_or_default()
    ));
    out.tables.push(t);
    out.plots.push(plot);
    if section.dump_paths {
        let ens = simulate(&sim.sigma, &sim.drift, c)?;
        let mut columns = vec!["path".to_string(), "step".to_string(), "time".to_string()];
        columns.extend((1..=d).map(|i| format!("x{i}")));
        let mut paths = Table::with_columns("paths", columns);
        for i in 0..ens.n_paths() {
            for k in 0..=c.n_steps {
                let mut r = vec![i.to_string(), k.to_string(), float(ens.times[k])];
                r.extend(ens.state(i, k).iter().map(|v| float(*v)));
                paths.push(r);
            }
        }
        out.tables.push(paths);
    }
    Ok(out)
}

fn report_row(t: &mut Table, r: &lpq_core::EstimateReport) {
    t.push(vec![
        r.label.clone(),
        float(r.estimate),
        float(r.standard_error),
        r.n_paths.to_string(),
        opt_float(r.bound_value),
        opt_float(r.ratio()),
    ]);
}

fn occupation(cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    let sim = simulation(cfg, seed)?;
    let f = Cfg::require(&cfg.field, "field")?;
    let horizon = cfg
        .occupation
        .as_ref()
        .and_then(|o| o.horizon)
        .unwrap_or(sim.config.horizon);
    let mut t = Table::new(
        "occupation",
        &[
            "estimator",
            "estimate",
            "standard_error",
            "n_paths",
            "bound_shape",
            "ratio",
        ],
    );
    let mut out = Outputs::default();
    let plain = estimate_occupation(&sim, f, horizon, cfg.exponents.as_ref(), cfg.grid.as_ref())?;
    out.summary
        .push(format!("occupation = {} +- {}", plain.estimate, plain.standard_error));
    report_row(&mut t, &plain);
    if let Some(w) = &cfg.weights {
        let e = Cfg::require(&cfg.exponents, "exponents")?;
        let weighted = weighted_functional(&sim, w, f, e, cfg.grid.as_ref())?;
        out.summary.push(format!(
            "weighted functional = {} +- {}, ratio {}",
            weighted.estimate,
            weighted.standard_error,
            opt_float(weighted.ratio())
        ));
        report_row(&mut t, &weighted);
        let (a, b) = estimate_ab(&sim, w)?;
        for (label, est) in [("A", a), ("B", b)] {
            t.push(vec![
                label.to_string(),
                float(est.value),
                float(est.standard_error),
                est.samples.to_string(),
                String::new(),
                String::new(),
            ]);
        }
    }
    out.tables.push(t);
    Ok(out)
}

fn green(cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    let sim = simulation(cfg, seed)?;
    let grid = Cfg::require(&cfg.grid, "grid")?;
    let e = Cfg::require(&cfg.exponents, "exponents")?;
    let w = Cfg::require(&cfg.weights, "weights")?;
    let g = green_density(&sim, w, grid, e)?;
    let mut out = Outputs::default();
    out.summary.push(format!(
        "total mass = {} +- {}, dual norm = {}, ratio = {}, leaked = {}",
        g.total_mass.value,
        g.total_mass.standard_error,
        g.dual_norm,
        g.ratio(),
        g.leaked_fraction
    ));
    let mut summary = Table::new("green", &["quantity", "value", "standard_error"]);
    let rows = [
        ("total_mass", g.total_mass.value, g.total_mass.standard_error),
        ("leaked_fraction", g.leaked_fraction, 0.0),
        ("dual_p", g.dual_exponents.p, 0.0),
        ("dual_q", g.dual_exponents.q, 0.0),
        ("dual_norm", g.dual_norm, 0.0),
        ("bound_shape", g.bound_shape, 0.0),
        ("ratio", g.ratio(), 0.0),
        ("A", g.a.value, g.a.standard_error),
        ("B", g.b.value, g.b.standard_error),
    ];
    for (q, v, se) in rows {
        summary.push(vec![q.to_string(), float(v), float(se)]);
    }
    let d = grid.dim;
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=d).map(|i| format!("x{i}")));
    columns.push("density".into());
    let mut density = Table::with_columns("green_density", columns);
    let mut marginal = PlotData {
        name: "green_time_marginal".into(),
        x_label: "t".into(),
        y_label: "mass_density".into(),
        points: Vec::new(),
    };
    let mut x = vec![0.0; d];
    for it in 0..grid.n_t {
        let tm = grid.t_mid(it);
        let slice = g.density.time_slice(it);
        for (ix, v) in slice.iter().enumerate() {
            grid.x_mid(ix, &mut x);
            let mut r = vec![float(tm)];
            r.extend(x.iter().map(|v| float(*v)));
            r.push(float(*v));
            density.push(r);
        }
        let mass = lpq_core::stats::pairwise_sum(slice) * grid.spatial_cell_volume();
        marginal.points.push((tm, mass));
    }
    out.tables.push(summary);
    out.tables.push(density);
    out.plots.push(marginal);
    Ok(out)
}

fn level_row(t: &mut Table, orientation: &str, s: &LevelSummary) {
    t.push(vec![
        orientation.to_string(),
        float(s.level),
        float(s.median_cost[0]),
        float(s.median_se[0]),
        float(s.median_cost[1]),
        float(s.median_se[1]),
        float(s.p90_cost[0]),
        float(s.p90_cost[1]),
        float(s.origin_occupancy.value),
        float(s.origin_occupancy.standard_error),
        float(s.zero_occupancy),
        s.n_paths.to_string(),
    ]);
}

fn nonexistence(cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    let section = Cfg::require(&cfg.ladder, "ladder")?;
    let drift = SingularDrift::new(section.alpha, section.beta)?;
    let mut ladder = TruncationLadder::new(section.levels.clone(), cfg.solver_config(seed)?, drift)?;
    ladder.origin_radius = section.origin_radius;
    ladder.floors = section.floors;
    ladder.validate()?;
    let mut t = Table::new(
        "nonexistence",
        &[
            "orientation",
            "level",
            "median_cost_floor1",
            "median_se_floor1",
            "median_cost_floor2",
            "median_se_floor2",
            "p90_cost_floor1",
            "p90_cost_floor2",
            "origin_occupancy",
            "origin_occupancy_se",
            "zero_occupancy",
            "n_paths",
        ],
    );
    let mut out = Outputs::default();
    let mut runs = vec![(Orientation::Attracting, ladder_experiment(&ladder)?)];
    if section.control {
        let control = ladder.clone().with_orientation(Orientation::Repelling);
        runs.push((Orientation::Repelling, ladder_experiment(&control)?));
    }
    for (orientation, report) in &runs {
        let name = match orientation {
            Orientation::Attracting => "attracting",
            Orientation::Repelling => "repelling",
        };
        level_row(&mut t, name, &report.baseline);
        for s in &report.levels {
            level_row(&mut t, name, s);
        }
        out.summary.push(format!(
            "{name}: cost strictly increasing = {}, cost variation = {}, trapping factor = {}",
            report.cost_strictly_increasing(),
            report.cost_variation(),
            report.trapping_factor()
        ));
        out.plots.push(PlotData {
            name: format!("nonexistence_cost_{name}"),
            x_label: "level".into(),
            y_label: "median_cost_floor1".into(),
            points: report.levels.iter().map(|s| (s.level, s.median_cost[0])).collect(),
        });
    }
    out.tables.push(t);
    Ok(out)
}

fn tightness(cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    let section = Cfg::require(&cfg.tightness, "tightness")?;
    let e = Cfg::require(&cfg.exponents, "exponents")?;
    let sim = simulation(cfg, seed)?;
    let c = &sim.config;
    if section.time_nodes < 1 {
        return Err(ConfigError("[tightness] time_nodes must be >= 1".into()).into());
    }
    let nodes: Vec<f64> = (0..=section.time_nodes)
        .map(|k| c.horizon * k as f64 / section.time_nodes as f64)
        .collect();
    let tc = build_time_change(&sim.drift, e, c.t0, &nodes)?;
    let pairs: Vec<(f64, f64)> = section.pairs.iter().map(|p| (p[0], p[1])).collect();
    let mut rows = Table::new(
        "tightness",
        &[
            "order",
            "s",
            "t",
            "moment",
            "standard_error",
            "delta",
            "bound",
            "calibration",
            "violated",
        ],
    );
    let mut summary = Table::new(
        "tightness_summary",
        &["order", "exponent", "n_hat", "held_out_violations"],
    );
    let mut out = Outputs::default();
    for &n in &section.orders {
        let r = moment_bound_check(&sim, &tc, e, n, &pairs)?;
        for row in &r.rows {
            rows.push(vec![
                n.to_string(),
                float(row.s),
                float(row.t),
                float(row.moment.value),
                float(row.moment.standard_error),
                float(row.delta),
                float(row.bound),
                row.calibration.to_string(),
                row.violated.to_string(),
            ]);
        }
        summary.push(vec![
            n.to_string(),
            float(r.exponent),
            float(r.n_hat),
            r.held_out_violations.to_string(),
        ]);
        out.summary.push(format!(
            "order {n}: N = {}, held-out violations {}",
            r.n_hat, r.held_out_violations
        ));
        out.plots.push(PlotData {
            name: format!("tightness_order{n}"),
            x_label: "delta".into(),
            y_label: "moment".into(),
            points: r.rows.iter().map(|row| (row.delta, row.moment.value)).collect(),
        });
    }
    out.tables.push(rows);
    out.tables.push(summary);
    Ok(out)
}

fn converge(cfg: &Cfg, seed: u64) -> Result<Outputs, RunError> {
    let section = Cfg::require(&cfg.converge, "converge")?;
    let base = cfg.solver_config(seed)?;
    let limit = Coefficients {
        sigma: cfg.sigma_or_identity(),
        drift: cfg.drift_or_zero(),
        t0: base.t0,
        x0: base.x0.clone(),
    };
    let element = |drift| Coefficients { drift, ..limit.clone() };
    let seq: Vec<Coefficients> = match &section.sequence {
        Sequence::Truncation { levels } => levels
            .iter()
            .map(|&m| element(truncate(limit.drift.clone(), m)))
            .collect(),
        Sequence::Mollification { scales } => scales
            .iter()
            .map(|&eps| element(mollify(limit.drift.clone(), eps)))
            .collect(),
        Sequence::Identity { length } => vec![limit.clone(); *length],
    };
    if seq.is_empty() {
        return Err(ConfigError("[converge] sequence is empty".into()).into());
    }
    let table = convergence_diagnostic(&seq, &limit, &base, &section.times, section.noise_seed)?;
    let mut t = Table::new("converge", &["n", "time", "to_limit", "to_previous", "noise_floor"]);
    for r in &table.rows {
        t.push(vec![
            r.n.to_string(),
            float(r.time),
            float(r.to_limit),
            opt_float(r.to_previous),
            float(r.noise_floor),
        ]);
    }
    let mut out = Outputs::default();
    for (j, time) in table.times.iter().enumerate() {
        let last = table.row(seq.len() - 1, j);
        out.summary.push(format!(
            "t = {time}: final distance {} (noise floor {})",
            last.to_limit, last.noise_floor
        ));
        out.plots.push(PlotData {
            name: format!("converge_t{j}"),
            x_label: "n".into(),
            y_label: "to_limit".into(),
            points: (0..seq.len()).map(|n| (n as f64, table.row(n, j).to_limit)).collect(),
        });
    }
    out.tables.push(t);
    Ok(out)
}
