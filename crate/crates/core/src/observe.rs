//! Partial-observation study: how well a window average `O_l` estimates
//! the daily total `O`.
//!
//! Paths are integrated exactly as piecewise-linear functions of time
//! (the trapezoid rule), including fractional cells at window edges.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BridgeModel;
use crate::simulate::{self, PathObserver, StepPlan};
use crate::stats::{Histogram, Moments};

/// An observation window `[l1, l2]` of length `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub l: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Window {
    /// Window of length `l` centred at midday.
    pub fn centred(l: f64) -> Result<Self> {
        // Keep the requested length exactly rather than l2 - l1 after rounding.
        Ok(Self { l, ..Self::new(0.5 - 0.5 * l, 0.5 + 0.5 * l)? })
    }

    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 >= 0.0 && l2 <= 1.0 && l2 > l1) {
            return Err(Error::Argument(format!(
                "observation window [{l1}, {l2}] must satisfy 0 <= l1 < l2 <= 1"
            )));
        }
        Ok(Self { l: l2 - l1, l1, l2 })
    }
}

fn check_path(grid: &[f64], path: &[f64]) -> Result<()> {
    if grid.len() != path.len() || grid.len() < 2 {
        return Err(Error::Argument("path and grid must have equal length of at least 2".into()));
    }
    Ok(())
}

/// Running trapezoid integral `P[k] = int_0^{t_k} X`.
fn prefix_integral(grid: &[f64], path: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..grid.len() {
        acc += 0.5 * (grid[k] - grid[k - 1]) * (path[k] + path[k - 1]);
        out.push(acc);
    }
}

/// `int_{t_0}^{s} X` for the linear interpolant, given the cell `i` with
/// `t_i <= s <= t_{i+1}`.
fn integral_to(grid: &[f64], path: &[f64], prefix: &[f64], i: usize, s: f64) -> f64 {
    if i + 1 >= grid.len() {
        return prefix[grid.len() - 1];
    }
    let h = grid[i + 1] - grid[i];
    let frac = (s - grid[i]) / h;
    let xs = path[i] + frac * (path[i + 1] - path[i]);
    prefix[i] + 0.5 * (s - grid[i]) * (path[i] + xs)
}

/// Index `i` of the cell containing `s` (`t_i <= s`, clamped to the grid).
fn cell(grid: &[f64], s: f64) -> usize {
    match grid.binary_search_by(|t| t.total_cmp(&s)) {
        Ok(i) => i.min(grid.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(grid.len() - 2),
    }
}

fn window_integral(grid: &[f64], path: &[f64], prefix: &[f64], w: &Window) -> f64 {
    let lo = integral_to(grid, path, prefix, cell(grid, w.l1), w.l1);
    let hi = integral_to(grid, path, prefix, cell(grid, w.l2), w.l2);
    hi - lo
}

/// Averages of the linear interpolant of `path` over consecutive cells of
/// `edges` (which must lie within the grid), written to `out`.
pub(crate) fn bin_averages(grid: &[f64], path: &[f64], edges: &[f64], out: &mut Vec<f64>) {
    let mut prefix = Vec::with_capacity(grid.len());
    prefix_integral(grid, path, &mut prefix);
    out.clear();
    let mut lo = integral_to(grid, path, &prefix, cell(grid, edges[0]), edges[0]);
    for e in edges.windows(2) {
        let hi = integral_to(grid, path, &prefix, cell(grid, e[1]), e[1]);
        out.push((hi - lo) / (e[1] - e[0]));
        lo = hi;
    }
}

/// `O_l = (1/l) int_{l1}^{l2} X_s ds` for the window of length `l` centred at 0.5.
pub fn window_estimate(grid: &[f64], path: &[f64], l: f64) -> Result<f64> {
    window_estimate_in(grid, path, &Window::centred(l)?)
}

/// `O_l` for an explicit window.
pub fn window_estimate_in(grid: &[f64], path: &[f64], window: &Window) -> Result<f64> {
    check_path(grid, path)?;
    if window.l1 < grid[0] || window.l2 > grid[grid.len() - 1] {
        return Err(Error::Argument("observation window extends beyond the path".into()));
    }
    let mut prefix = Vec::with_capacity(grid.len());
    prefix_integral(grid, path, &mut prefix);
    Ok(window_integral(grid, path, &prefix, window) / window.l)
}

/// `O = int X_s ds` over the whole path.
pub fn true_total(grid: &[f64], path: &[f64]) -> Result<f64> {
    check_path(grid, path)?;
    Ok(grid
        .windows(2)
        .zip(path.windows(2))
        .map(|(t, x)| 0.5 * (t[1] - t[0]) * (x[0] + x[1]))
        .sum())
}

/// Distribution of `R = O_l / O - 1` for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    pub l: f64,
    pub l1: f64,
    pub l2: f64,
    pub count: u64,
    pub average: f64,
    pub sd: f64,
    pub skewness: f64,
    /// Excess kurtosis (0 for a normal distribution).
    pub excess_kurtosis: f64,
    pub minimum: f64,
    pub maximum: f64,
    /// `sd / average`.
    pub cv: f64,
}

/// Result of the relative-error study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationReport {
    pub rows: Vec<WindowStats>,
    /// Density histograms of `R`, one per window (`None` if all samples coincide at -1).
    pub histograms: Vec<Option<Histogram>>,
    /// Paths with `O = 0`, left out of every statistic.
    pub excluded: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub model: Option<String>,
}

/// Number of histogram bins.
pub const HISTOGRAM_BINS: usize = 200;
/// Upper clip of the histogram range.
pub const HISTOGRAM_MAX: f64 = 10.0;

/// Streaming observer computing `R` for several windows on a uniform grid.
pub struct RelativeErrorObserver {
    grid: Vec<f64>,
    windows: Vec<Window>,
}

/// Accumulated per-window moments, samples, and the excluded-path count.
#[derive(Debug, Clone)]
pub struct RelativeErrorAcc {
    pub moments: Vec<Moments>,
    pub samples: Vec<Vec<f64>>,
    pub excluded: u64,
}

impl RelativeErrorObserver {
    pub fn new(grid: Vec<f64>, windows: Vec<Window>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Argument("at least one window length is required".into()));
        }
        if grid.len() < 2 || (grid[0] - 0.0).abs() > 1e-12 || (grid[grid.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::Argument("observation study needs paths on the unit day [0, 1]".into()));
        }
        Ok(Self { grid, windows })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }
}

impl PathObserver for RelativeErrorObserver {
    type Acc = RelativeErrorAcc;

    fn init(&self) -> Self::Acc {
        RelativeErrorAcc {
            moments: vec![Moments::new(); self.windows.len()],
            samples: vec![Vec::new(); self.windows.len()],
            excluded: 0,
        }
    }

    fn observe(&self, acc: &mut Self::Acc, _index: usize, path: &[f64]) {
        // Per-call scratch: the prefix integral of this path.
        let mut prefix = Vec::with_capacity(path.len());
        prefix_integral(&self.grid, path, &mut prefix);
        let total = prefix[prefix.len() - 1];
        if total <= 0.0 {
            acc.excluded += 1;
            return;
        }
        for (k, w) in self.windows.iter().enumerate() {
            let r = window_integral(&self.grid, path, &prefix, w) / (w.l * total) - 1.0;
            acc.moments[k].push(r);
            acc.samples[k].push(r);
        }
    }

    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        into.excluded += other.excluded;
        for (a, b) in into.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
        for (a, b) in into.samples.iter_mut().zip(other.samples) {
            a.extend(b);
        }
    }
}

impl ObservationReport {
    /// Builds the report from an accumulated study.
    pub fn from_acc(
        windows: &[Window],
        acc: RelativeErrorAcc,
        n_paths: usize,
        dt: f64,
        seed: u64,
        model: Option<String>,
    ) -> Result<Self> {
        if acc.moments.first().is_none_or(|m| m.count() == 0) {
            return Err(Error::Degenerate(format!(
                "all {} paths have zero daily total; relative error is undefined",
                acc.excluded
            )));
        }
        let mut rows = Vec::with_capacity(windows.len());
        let mut histograms = Vec::with_capacity(windows.len());
        for ((w, m), samples) in windows.iter().zip(&acc.moments).zip(&acc.samples) {
            let average = m.mean();
            let sd = if m.count() > 1 { m.sd() } else { 0.0 };
            rows.push(WindowStats {
                l: w.l,
                l1: w.l1,
                l2: w.l2,
                count: m.count(),
                average,
                sd,
                skewness: m.skewness(),
                excess_kurtosis: m.excess_kurtosis(),
                minimum: m.min(),
                maximum: m.max(),
                cv: sd / average,
            });
            let hi = m.max().min(HISTOGRAM_MAX);
            histograms.push(Histogram::new(samples, -1.0, hi, HISTOGRAM_BINS));
        }
        Ok(Self {
            rows,
            histograms,
            excluded: acc.excluded,
            n_paths,
            dt,
            seed,
            model,
        })
    }
}

/// Simulates `n_paths` bridges of a unit-day model and reports the relative
/// error of the centred window estimate for each window length in `ls`.
pub fn relative_error_study(
    model: &BridgeModel,
    ls: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<ObservationReport> {
    if (model.horizon - 1.0).abs() > 1e-12 {
        return Err(Error::Argument("the observation study is defined on the unit day (T = 1)".into()));
    }
    let windows = ls.iter().map(|&l| Window::centred(l)).collect::<Result<Vec<_>>>()?;
    let plan = StepPlan::bridge(model, dt)?;
    let observer = RelativeErrorObserver::new(plan.grid(), windows)?;
    let acc = simulate::run(&plan, n_paths, seed, &observer)?;
    ObservationReport::from_acc(observer.windows(), acc, n_paths, plan.dt(), seed, model.name.clone())
}
