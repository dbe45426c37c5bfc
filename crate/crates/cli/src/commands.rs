use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use fishbridge_core::calibrate::{
    self, default_grid, empirical_moments, normalize_days, successive_day_correlation, FitOptions, NormalizeOptions,
    Normalization, SyntheticOptions,
};
use fishbridge_core::control::{convergence_rates, cost_of_migration, optimal_control, solve_limit, solve_penalized};
use fishbridge_core::moments::{closed_series, mean_closed, moment_ode, var_closed};
use fishbridge_core::observe::relative_error_study;
use fishbridge_core::simulate::{empirical_objective, run, NodeSamples, PathEnsemble, StepPlan};
use fishbridge_core::stats::{quantile_sorted, Moments};
use fishbridge_core::{classify_regime, feller_check, BridgeModel, ModelConfig};
use serde_json::{json, Value};

use crate::cli::{
    FellerArgs, FitArgs, GenerateArgs, ModelArg, MomentsArgs, ObserveArgs, RatesArgs, SimulateArgs, SolveArgs,
};
use crate::error::CliError;
use crate::output::{Sink, Table};

/// Result of a subcommand: extra manifest inputs (such as the parsed model).
pub type Outcome = Result<Value, CliError>;

const SDE: &str = "bridge: dX = (a_t - h_t X) dt + sigma_t sqrt(h_t X) dB, X_0 = X_T = 0";

fn load_model(arg: &ModelArg) -> Result<(BridgeModel, Value), CliError> {
    let config = ModelConfig::load(&arg.model)?;
    let model = config.to_model()?;
    let value = serde_json::to_value(&config).map_err(|e| CliError::other(e.to_string()))?;
    Ok((model, json!({ "model": value })))
}

fn model_note(arg: &ModelArg, model: &BridgeModel) -> String {
    let name = model.name.clone().unwrap_or_else(|| arg.model.display().to_string());
    format!("model: {name} (T = {}, m = {})", model.horizon, model.m)
}

/// `n + 1` equally spaced nodes on `[0, horizon]`.
fn closed_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 }).collect()
}

/// `n` equally spaced nodes on `[0, horizon)`.
fn open_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| horizon * k as f64 / n as f64).collect()
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

enum ControlSpec {
    Bridge,
    Optimal(Option<f64>),
    Table(Vec<f64>, Vec<f64>),
}

impl ControlSpec {
    fn parse(text: &str) -> Result<Self, CliError> {
        if text == "bridge" {
            return Ok(Self::Bridge);
        }
        if let Some(eta) = text.strip_prefix("ustar:") {
            if eta == "limit" {
                return Ok(Self::Optimal(None));
            }
            let eta: f64 = eta
                .parse()
                .map_err(|_| CliError::usage(format!("invalid penalty in --control {text}")))?;
            return Ok(Self::Optimal(Some(eta)));
        }
        if let Some(path) = text.strip_prefix("file:") {
            let (t, u) = read_control_table(Path::new(path))?;
            return Ok(Self::Table(t, u));
        }
        Err(CliError::usage(format!(
            "--control must be bridge, ustar:<eta>, ustar:limit or file:<csv>; got {text}"
        )))
    }

    fn describe(&self) -> String {
        match self {
            Self::Bridge => "u = h (bridge)".into(),
            Self::Optimal(Some(eta)) => format!("u = optimal control of the penalized problem, eta = {eta}"),
            Self::Optimal(None) => "u = optimal control of the limit problem".into(),
            Self::Table(t, _) => format!("u = piecewise-linear table with {} nodes", t.len()),
        }
    }
}

/// Reads a `t,u` control table (comment lines start with `#`).
fn read_control_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::other(format!("{}: {e}", path.display())))?;
    let (mut ts, mut us) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<(f64, f64)>() {
        let (t, u) = row.map_err(|e| CliError::other(format!("{}: {e}", path.display())))?;
        ts.push(t);
        us.push(u);
    }
    if ts.is_empty() || ts.windows(2).any(|w| w[1] <= w[0]) || us.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
        return Err(CliError::other(format!(
            "{}: control table needs increasing t and finite non-negative u",
            path.display()
        )));
    }
    Ok((ts, us))
}

fn interpolate(ts: &[f64], us: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return us[0];
    }
    if t >= ts[ts.len() - 1] {
        return us[us.len() - 1];
    }
    let i = ts.partition_point(|&x| x <= t) - 1;
    let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
    us[i] + w * (us[i + 1] - us[i])
}

pub fn simulate(args: &SimulateArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    let control = ControlSpec::parse(&args.control)?;
    if matches!(control, ControlSpec::Bridge) && args.x0 != 0.0 {
        return Err(CliError::usage("the bridge starts at 0; --x0 applies to controlled runs only"));
    }
    let weight = match control {
        ControlSpec::Optimal(_) => Some(model.weight()?),
        _ => None,
    };
    let plan = match &control {
        ControlSpec::Bridge => StepPlan::bridge(&model, args.dt)?,
        ControlSpec::Optimal(eta) => {
            let w = weight.as_ref().expect("weight of an optimal control");
            StepPlan::controlled(&model, |t| optimal_control(w, *eta, t), args.dt, args.x0)?
        }
        ControlSpec::Table(ts, us) => StepPlan::controlled(&model, |t| Ok(interpolate(ts, us, t)), args.dt, args.x0)?,
    };
    let notes = vec![
        format!("fishbridge simulate; {SDE}; controlled runs replace h by u"),
        model_note(&args.model, &model),
        format!("control: {}", control.describe()),
        format!(
            "scheme: truncated Euler with exact stiff steps, dt = {}, paths = {}, seed = {}",
            plan.dt(),
            args.paths,
            args.seed
        ),
    ];
    if args.ensemble {
        let ens = PathEnsemble::simulate(&plan, args.paths, args.seed)?;
        sink.binary("ensemble.bin", |out| ens.write_binary(out).map_err(CliError::from))?;
    } else {
        let stride = args.every.unwrap_or_else(|| default_stride(plan.steps(), args.paths)).max(1);
        let mut nodes: Vec<usize> = (0..=plan.steps()).step_by(stride).collect();
        if *nodes.last().unwrap() != plan.steps() {
            nodes.push(plan.steps());
        }
        let samples = run(&plan, args.paths, args.seed, &NodeSamples { nodes: nodes.clone() })?;
        let mut table = Table::new(notes.clone(), &["t", "mean", "sd", "q05", "q50", "q95"]);
        table.notes.push("columns: sample mean, sample sd and 5/50/95% quantiles of X_t across paths".into());
        for (&k, mut values) in nodes.iter().zip(samples) {
            let m = Moments::from_slice(&values);
            values.sort_by(f64::total_cmp);
            let sd = if values.len() > 1 { m.sd() } else { 0.0 };
            table.push(vec![
                plan.time(k),
                m.mean(),
                sd,
                quantile_sorted(&values, 0.05),
                quantile_sorted(&values, 0.5),
                quantile_sorted(&values, 0.95),
            ]);
        }
        sink.table("simulate", &table)?;
    }
    if args.objective {
        let weight = match weight {
            Some(w) => w,
            None => model.weight()?,
        };
        let (objective_plan, eta) = match &control {
            // The running cost of the bridge is evaluated on the controlled
            // equation with u = h, which is the same process left unpinned.
            ControlSpec::Bridge => {
                let reversion = model.reversion()?;
                (StepPlan::controlled(&model, |t| reversion.rate(t), args.dt, 0.0)?, None)
            }
            ControlSpec::Optimal(eta) => (plan, *eta),
            ControlSpec::Table(..) => (plan, None),
        };
        let est = empirical_objective(&objective_plan, &weight, eta, args.paths, args.seed)?;
        let cost = if matches!(control, ControlSpec::Bridge) {
            Some(cost_of_migration(&model, &[0.0])?[0])
        } else {
            None
        };
        sink.json(
            "objective",
            &json!({
                "notes": [
                    "running cost: int (1/(m+1)) X_s u_s^(m+1) / w_s ds over [0, T - dt] (trapezoid)",
                    "penalized objective adds X_T / eta",
                ],
                "estimate": est,
                "cost_of_migration_at_zero": cost,
            }),
        )?;
    }
    Ok(inputs)
}

/// Stride keeping the summary to about 1000 rows and the node samples
/// held in memory to about 2e7 values.
fn default_stride(steps: usize, paths: usize) -> usize {
    let rows = (20_000_000 / paths.max(1)).clamp(10, 1000);
    steps.div_ceil(rows).max(1)
}

pub fn moments(args: &MomentsArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    if args.grid == 0 {
        return Err(CliError::usage("--grid must be positive"));
    }
    let grid = closed_grid(model.horizon, args.grid);
    let ode = moment_ode(&model, &grid)?;
    let closed = match model.application_params() {
        Some(p) => Some(closed_series(&p, &grid)?),
        None => None,
    };
    let mut notes = vec![
        format!("fishbridge moments; {SDE}"),
        model_note(&args.model, &model),
        "mean_ode, sd_ode: moment ODEs m' = a - h m, v' = -2 h v + sigma^2 h m (adaptive quadrature)".into(),
    ];
    let columns: &[&str] = if closed.is_some() {
        notes.push("mean_closed, sd_closed: closed-form mean and standard deviation of the unit-day model".into());
        &["t", "mean_closed", "sd_closed", "mean_ode", "sd_ode"]
    } else {
        notes.push("no closed form for this reversion family; ODE values only".into());
        &["t", "mean_ode", "sd_ode"]
    };
    let mut table = Table::new(notes, columns);
    let sd_ode = ode.sd();
    for (k, &t) in grid.iter().enumerate() {
        let mut row = vec![t];
        if let Some(c) = &closed {
            row.push(c.mean[k]);
            row.push(c.variance[k].max(0.0).sqrt());
        }
        row.push(ode.mean[k]);
        row.push(sd_ode[k]);
        table.push(row);
    }
    sink.table("moments", &table)?;
    Ok(inputs)
}

pub fn solve(args: &SolveArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    if args.grid < 2 {
        return Err(CliError::usage("--grid must be at least 2"));
    }
    let weight = model.weight()?;
    let reversion = model.reversion()?;
    let grid = open_grid(model.horizon, args.grid);
    let pen = solve_penalized(&weight, &model.source, args.eta, &grid)?;
    let limit = solve_limit(&weight, &model.source, &grid)?;
    let notes = vec![
        "fishbridge solve; value function A_t x + C_t; optimal control u* = z_t A_t^(1/m), z = w^(1/m)".to_string(),
        model_note(&args.model, &model),
        format!("penalized problem: terminal cost X_T / eta, eta = {}", args.eta),
        "h: reversion rate of the bridge (equals the limit optimal control)".into(),
    ];
    let columns = ["t", "A_eta", "C_eta", "u_star_eta", "A_limit", "C_limit", "u_star_limit", "h"];
    let mut table = Table::new(notes, &columns);
    for (k, &t) in grid.iter().enumerate() {
        table.push(vec![
            t,
            pen.a_coef[k],
            pen.c_coef[k],
            pen.u_star[k],
            limit.a_coef[k],
            limit.c_coef[k],
            limit.u_star[k],
            reversion.rate(t)?,
        ]);
    }
    sink.table("solve", &table)?;

    let c = reversion.tail_coefficient();
    let class = classify_regime(c, model.m);
    let etas = [args.eta, args.eta / 2.0, args.eta / 4.0];
    let rates = convergence_rates(&weight, &model.source, &etas, &grid[1..]).ok();
    let cost = if class.admissible {
        Some(cost_of_migration(&model, &[0.0])?[0])
    } else {
        None
    };
    sink.json(
        "solve_summary",
        &json!({
            "eta": args.eta,
            "blow_up_coefficient": c,
            "m": model.m,
            "admissible": class.admissible,
            "regime": format!("{:?}", class.regime),
            "cost_of_migration_at_zero": cost,
            "rates": rates.map(|r| {
                let (pa, pc, pu) = r.final_orders();
                json!({ "report": r, "order_A": pa, "order_C": pc, "order_u_star": pu })
            }),
        }),
    )?;
    Ok(inputs)
}

pub fn fit(args: &FitArgs, sink: &mut Sink) -> Outcome {
    if let Some(s) = args.scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(CliError::usage(format!("--scale must be positive, got {s}")));
        }
    }
    let raw = calibrate::read_raw_file(&args.data)?;
    let sun = calibrate::read_sun_file(&args.sun)?;
    let opts = NormalizeOptions {
        unit_minutes: args.unit_minutes,
        normalization: args
            .scale
            .map_or(Normalization::DailyTotal, |scale| Normalization::CountScale { scale }),
    };
    let data = normalize_days(&raw, &sun, &opts)?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    let fit_opts = FitOptions::default();
    let result = calibrate::fit(&data, &fit_opts)?;
    let grid = default_grid(&data.days, fit_opts.grid_lo, fit_opts.grid_hi)?;
    let emp = empirical_moments(&data.days, &grid)?;
    let correlations = successive_day_correlation(&data.days, &grid);

    let params = result.params();
    let mut table = Table::new(
        vec![
            "fishbridge fit; empirical mean/sd of the normalized daily series and the fitted unit-day model".into(),
            format!("days retained: {}, excluded: {}", result.n_days, result.n_excluded),
        ],
        &["t", "mean_empirical", "sd_empirical", "mean_fit", "sd_fit"],
    );
    for (k, &t) in emp.grid.iter().enumerate() {
        table.push(vec![
            t,
            emp.mean[k],
            emp.sd[k],
            mean_closed(&params, t)?,
            var_closed(&params, t)?.max(0.0).sqrt(),
        ]);
    }
    sink.table("fit_moments", &table)?;

    let corr_notes = vec![
        "fishbridge fit; Pearson correlation of consecutive days with positive totals on a common unit grid".into(),
    ];
    sink.text("correlations.csv", &corr_notes, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["first", "second", "correlation"]).map_err(|e| CliError::other(e.to_string()))?;
        for p in &correlations.pairs {
            w.write_record([p.first.to_string(), p.second.to_string(), p.correlation.to_string()])
                .map_err(|e| CliError::other(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::other(e.to_string()))
    })?;

    let report = json!({
        "fit": result,
        "normalization": opts.normalization,
        "unit_minutes": opts.unit_minutes,
        "correlation_summary": correlations.summary,
        "warnings": data.warnings,
    });
    match &args.out {
        Some(path) => write_json_at(path, &report)?,
        None => {
            sink.json("fit", &report)?;
        }
    }
    Ok(json!({ "data": args.data, "sun": args.sun }))
}

fn write_json_at(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::other(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

pub fn observe(args: &ObserveArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    let report = relative_error_study(&model, &args.l, args.paths, args.dt, args.seed)?;
    let notes = vec![
        "fishbridge observe; relative error R = O_l / O - 1 of the window estimate".into(),
        "O = int_0^1 X_s ds (daily total), O_l = (1/l) int_{l1}^{l2} X_s ds with the window centred at 0.5".into(),
        model_note(&args.model, &model),
        format!(
            "paths = {}, dt = {}, seed = {}, excluded (O = 0) = {}; kurtosis is excess kurtosis",
            args.paths, report.dt, args.seed, report.excluded
        ),
    ];
    let mut table = Table::new(
        notes.clone(),
        &["l", "average", "sd", "skewness", "kurtosis", "maximum", "minimum", "cv", "l1", "l2", "count"],
    );
    for r in &report.rows {
        table.push(vec![
            r.l, r.average, r.sd, r.skewness, r.excess_kurtosis, r.maximum, r.minimum, r.cv, r.l1, r.l2,
            r.count as f64,
        ]);
    }
    sink.table("observe", &table)?;
    for (row, hist) in report.rows.iter().zip(&report.histograms) {
        let Some(hist) = hist else { continue };
        let mut h = Table::new(
            vec![
                format!("fishbridge observe; density of R for l = {}", row.l),
                "uniform bins on [-1, min(max R, 10)], normalized to unit mass".into(),
            ],
            &["r_lo", "r_hi", "density"],
        );
        for (e, d) in hist.edges.windows(2).zip(&hist.density) {
            h.push(vec![e[0], e[1], *d]);
        }
        sink.table(&format!("histogram_l{}", row.l), &h)?;
    }
    Ok(inputs)
}

pub fn feller(args: &FellerArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    if args.grid == 0 {
        return Err(CliError::usage("--grid must be positive"));
    }
    let grid = open_grid(model.horizon, args.grid);
    let report = feller_check(&model, &grid)?;
    println!("high-volatility: {}", report.high_volatility);
    sink.json(
        "feller",
        &json!({
            "notes": ["high-volatility regime: a_t <= (sigma_t^2 / 2) h_t at every node"],
            "nodes": args.grid,
            "high_volatility": report.high_volatility,
            "first_violation": report.first_violation,
        }),
    )?;
    Ok(inputs)
}

pub fn generate(args: &GenerateArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    let start_date = NaiveDate::parse_from_str(&args.start_date, "%Y-%m-%d")
        .map_err(|e| CliError::usage(format!("--start-date {}: {e}", args.start_date)))?;
    let sunrise = NaiveTime::parse_from_str(&args.sunrise, "%H:%M")
        .map_err(|e| CliError::usage(format!("--sunrise {}: {e}", args.sunrise)))?;
    let opts = SyntheticOptions {
        start_date,
        sunrise,
        bin_minutes: args.bin_minutes,
        count_scale: args.scale,
        dt: args.dt,
    };
    let data = calibrate::generate_synthetic(&model, args.days, args.bins, args.seed, &opts)?;
    let notes = vec![
        "fishbridge generate; synthetic counts: independent bridge paths, Poisson(scale x bin average of X)".into(),
        model_note(&args.model, &model),
        format!(
            "days = {}, bins = {}, bin minutes = {}, scale = {}, seed = {}, dt = {}",
            args.days, args.bins, args.bin_minutes, args.scale, args.seed, args.dt
        ),
    ];
    sink.text("raw.csv", &notes, |out| calibrate::write_raw(out, &data.raw).map_err(CliError::from))?;
    sink.text("sun.csv", &notes[..1], |out| calibrate::write_sun(out, &data.sun).map_err(CliError::from))?;
    Ok(inputs)
}

pub fn rates(args: &RatesArgs, sink: &mut Sink) -> Outcome {
    let (model, inputs) = load_model(&args.model)?;
    if args.grid < 2 {
        return Err(CliError::usage("--grid must be at least 2"));
    }
    let weight = model.weight()?;
    let grid: Vec<f64> = open_grid(model.horizon, args.grid).into_iter().skip(1).collect();
    let rep = convergence_rates(&weight, &model.source, &args.eta, &grid)?;
    let notes = vec![
        "fishbridge rates; sup-norm gaps between the penalized and limit solutions over interior nodes".into(),
        "order_X between consecutive penalties: ln(err_prev / err) / ln(eta_prev / eta); NaN when undefined".into(),
        model_note(&args.model, &model),
    ];
    let mut table = Table::new(notes, &["eta", "err_A", "err_C", "err_u_star", "order_A", "order_C", "order_u_star"]);
    for k in 0..rep.etas.len() {
        let order = |v: &[Option<f64>]| if k == 0 { f64::NAN } else { opt(v[k - 1]) };
        table.push(vec![
            rep.etas[k],
            rep.err_a[k],
            rep.err_c[k],
            rep.err_u[k],
            order(&rep.order_a),
            order(&rep.order_c),
            order(&rep.order_u),
        ]);
    }
    sink.table("rates", &table)?;
    Ok(inputs)
}
