//! Ingestion, normalization and moment-matching calibration of daily
//! fish-count series, plus a synthetic data generator for round trips.
//!
//! Each day is mapped affinely onto the unit interval (sunrise to sunset),
//! and bin counts are made dimensionless by a count scale. The default scale
//! is the daily total, so a value is the fraction of the day's count per
//! measurement unit. With [`Normalization::CountScale`], a fixed number of
//! fish per unit of `X` is used instead, which undoes the binning of
//! [`generate_synthetic`] exactly.
//!
//! Calibration has two decoupled least-squares stages on an interior grid.
//! 1. The closed-form mean is fitted to the bin-wise empirical mean. For a
//!    fixed `eps` the mean is linear in `(a0, a1)`, so that stage reduces to
//!    a one-dimensional golden-section search over `ln eps`.
//! 2. The closed-form standard deviation is fitted to the empirical one by
//!    projected Levenberg–Marquardt in `(kappa0, kappa1)`.
//!
//! Both stages use the parametrization `f(t) = p t + q (1 - t)`,
//! `p = f0`, `q = f0 + f1`, under which the sign constraints
//! `f0 >= 0, f1 >= -f0` become the box `p, q >= 0`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate, NaiveTime, Timelike};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ApplicationParams, BridgeModel};
use crate::moments::{mean_closed, var_closed};
use crate::observe::bin_averages;
use crate::simulate::{self, path_rng, PathObserver, StepPlan};
use crate::stats::{pearson, Moments};

/// One row of the raw count file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub bin_start: NaiveTime,
    pub count: u64,
}

/// One row of the sunrise/sunset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SunRecord {
    pub date: NaiveDate,
    pub sunrise: NaiveTime,
    pub sunset: NaiveTime,
}

#[derive(Deserialize, Serialize)]
struct RawRow {
    date: String,
    bin_start: String,
    count: u64,
}

#[derive(Deserialize, Serialize)]
struct SunRow {
    date: String,
    sunrise: String,
    sunset: String,
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Argument(format!("line {line}: invalid date {s:?}: {e}")))
}

fn parse_time(s: &str, line: usize) -> Result<NaiveTime> {
    let s = s.trim();
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|e| Error::Argument(format!("line {line}: invalid time {s:?}: {e}")))
}

fn format_time(t: NaiveTime) -> String {
    if t.second() == 0 {
        t.format("%H:%M").to_string()
    } else {
        t.format("%H:%M:%S").to_string()
    }
}

/// Reads the raw count CSV (`date,bin_start,count`).
pub fn read_raw<R: Read>(input: R) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        out.push(RawRecord {
            date: parse_date(&row.date, line)?,
            bin_start: parse_time(&row.bin_start, line)?,
            count: row.count,
        });
    }
    Ok(out)
}

/// Reads the sunrise/sunset CSV (`date,sunrise,sunset`).
pub fn read_sun<R: Read>(input: R) -> Result<Vec<SunRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<SunRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        out.push(SunRecord {
            date: parse_date(&row.date, line)?,
            sunrise: parse_time(&row.sunrise, line)?,
            sunset: parse_time(&row.sunset, line)?,
        });
    }
    Ok(out)
}

pub fn read_raw_file(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    read_raw(std::fs::File::open(path)?)
}

pub fn read_sun_file(path: impl AsRef<Path>) -> Result<Vec<SunRecord>> {
    read_sun(std::fs::File::open(path)?)
}

/// Writes the raw count CSV, header included.
pub fn write_raw<W: Write>(out: W, records: &[RawRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(RawRow {
            date: r.date.to_string(),
            bin_start: format_time(r.bin_start),
            count: r.count,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the sunrise/sunset CSV, header included.
pub fn write_sun<W: Write>(out: W, records: &[SunRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(SunRow {
            date: r.date.to_string(),
            sunrise: format_time(r.sunrise),
            sunset: format_time(r.sunset),
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// How bin counts are made dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the day's total count.
    DailyTotal,
    /// Divide by a fixed number of fish per unit of `X`.
    CountScale { scale: f64 },
}

/// Normalization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Measurement unit in minutes; counts of bins of another width are
    /// rescaled to this unit.
    pub unit_minutes: f64,
    pub normalization: Normalization,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self {
            unit_minutes: 10.0,
            normalization: Normalization::DailyTotal,
        }
    }
}

/// One day of counts on the unit time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub date: NaiveDate,
    pub sunrise: NaiveTime,
    pub sunset: NaiveTime,
    pub bin_start: Vec<NaiveTime>,
    pub counts: Vec<u64>,
    /// Bin midpoints mapped to `(0, 1)`.
    pub t: Vec<f64>,
    pub normalized: Vec<f64>,
    pub total: u64,
    /// Zero-total days are kept for reporting but never used in fitting.
    pub zero_total: bool,
}

impl DailySeries {
    /// Linear interpolation of the normalized series at `s`, constant beyond
    /// the first and last bin midpoints.
    pub fn value_at(&self, s: f64) -> f64 {
        interpolate(&self.t, &self.normalized, s)
    }

    /// Whether `s` lies between the first and last bin midpoints.
    pub fn covers(&self, s: f64) -> bool {
        !self.t.is_empty() && s >= self.t[0] && s <= self.t[self.t.len() - 1]
    }
}

fn interpolate(xs: &[f64], ys: &[f64], s: f64) -> f64 {
    let n = xs.len();
    if s <= xs[0] {
        return ys[0];
    }
    if s >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&x| x <= s) - 1;
    let w = (s - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Normalized days and the warnings raised while building them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedData {
    pub days: Vec<DailySeries>,
    pub warnings: Vec<String>,
}

impl NormalizedData {
    /// Days with a positive total.
    pub fn retained(&self) -> impl Iterator<Item = &DailySeries> {
        self.days.iter().filter(|d| !d.zero_total)
    }

    pub fn excluded(&self) -> usize {
        self.days.iter().filter(|d| d.zero_total).count()
    }
}

fn minutes(t: NaiveTime) -> f64 {
    t.num_seconds_from_midnight() as f64 / 60.0
}

/// Groups raw bins by date and maps each day to the unit interval. Days
/// without a sunrise/sunset entry are skipped with a warning; bins whose
/// midpoint falls outside daytime are dropped with a warning.
pub fn normalize_days(raw: &[RawRecord], sun: &[SunRecord], opts: &NormalizeOptions) -> Result<NormalizedData> {
    if !(opts.unit_minutes > 0.0 && opts.unit_minutes.is_finite()) {
        return Err(Error::Argument(format!("measurement unit must be positive, got {}", opts.unit_minutes)));
    }
    if let Normalization::CountScale { scale } = opts.normalization {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Argument(format!("count scale must be positive, got {scale}")));
        }
    }
    let mut sun_by_date = BTreeMap::new();
    for s in sun {
        if !(s.sunrise < s.sunset) {
            return Err(Error::Argument(format!(
                "{}: sunrise {} must precede sunset {}",
                s.date, s.sunrise, s.sunset
            )));
        }
        sun_by_date.insert(s.date, *s);
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<(NaiveTime, u64)>> = BTreeMap::new();
    for r in raw {
        by_date.entry(r.date).or_default().push((r.bin_start, r.count));
    }

    let mut days = Vec::with_capacity(by_date.len());
    let mut warnings = Vec::new();
    for (date, mut bins) in by_date {
        let Some(s) = sun_by_date.get(&date) else {
            warnings.push(format!("{date}: no sunrise/sunset entry, day skipped"));
            continue;
        };
        bins.sort_by_key(|b| b.0);
        if bins.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Argument(format!("{date}: duplicate bin start times")));
        }
        let width = bins
            .windows(2)
            .map(|w| minutes(w[1].0) - minutes(w[0].0))
            .fold(f64::INFINITY, f64::min);
        let width = if width.is_finite() { width } else { opts.unit_minutes };
        let (rise, set) = (minutes(s.sunrise), minutes(s.sunset));
        let per_unit = opts.unit_minutes / width;

        let mut day = DailySeries {
            date,
            sunrise: s.sunrise,
            sunset: s.sunset,
            bin_start: Vec::with_capacity(bins.len()),
            counts: Vec::with_capacity(bins.len()),
            t: Vec::with_capacity(bins.len()),
            normalized: Vec::new(),
            total: 0,
            zero_total: false,
        };
        let mut dropped = 0;
        for (start, count) in bins {
            let t = (minutes(start) + 0.5 * width - rise) / (set - rise);
            if !(t > 0.0 && t < 1.0) {
                dropped += 1;
                continue;
            }
            day.bin_start.push(start);
            day.counts.push(count);
            day.t.push(t);
            day.total += count;
        }
        if dropped > 0 {
            warnings.push(format!("{date}: {dropped} bin(s) outside daytime dropped"));
        }
        if day.t.is_empty() {
            warnings.push(format!("{date}: no daytime bins, day skipped"));
            continue;
        }
        day.zero_total = day.total == 0;
        let denom = match opts.normalization {
            Normalization::DailyTotal => day.total.max(1) as f64,
            Normalization::CountScale { scale } => scale,
        };
        day.normalized = day.counts.iter().map(|&c| c as f64 * per_unit / denom).collect();
        days.push(day);
    }
    Ok(NormalizedData { days, warnings })
}

/// Midpoints of the most common number of daytime bins, restricted to
/// `[lo, hi]`.
pub fn default_grid(days: &[DailySeries], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for d in days.iter().filter(|d| !d.zero_total) {
        *freq.entry(d.t.len()).or_default() += 1;
    }
    let bins = freq
        .iter()
        .max_by_key(|(len, n)| (**n, **len))
        .map(|(len, _)| *len)
        .ok_or_else(|| Error::Degenerate("no day with a positive total".into()))?;
    let grid: Vec<f64> = (0..bins)
        .map(|j| (j as f64 + 0.5) / bins as f64)
        .filter(|&t| t >= lo && t <= hi)
        .collect();
    if grid.len() < 3 {
        return Err(Error::Degenerate(format!("only {} grid points inside [{lo}, {hi}]", grid.len())));
    }
    Ok(grid)
}

/// Correlation of two days on the grid points both of them cover; `None`
/// when fewer than two points overlap or either series is constant there.
pub fn day_correlation(a: &DailySeries, b: &DailySeries, grid: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .filter(|&&s| a.covers(s) && b.covers(s))
        .map(|&s| (a.value_at(s), b.value_at(s)))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    pearson(&xs, &ys)
}

/// Correlation between one day and the next.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayPairCorrelation {
    pub first: String,
    pub second: String,
    pub correlation: f64,
}

/// Summary of the successive-day correlations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub n_pairs: usize,
    pub average: f64,
    pub sd: f64,
    pub skewness: f64,
    pub standard_error: f64,
    /// `average / standard_error`: consistent with zero correlation when small.
    pub t_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub pairs: Vec<DayPairCorrelation>,
    /// `None` when fewer than two pairs are available.
    pub summary: Option<CorrelationSummary>,
}

/// Pearson correlations of consecutive calendar days that both have a
/// positive total, on `grid`.
pub fn successive_day_correlation(days: &[DailySeries], grid: &[f64]) -> CorrelationReport {
    let by_date: BTreeMap<NaiveDate, &DailySeries> =
        days.iter().filter(|d| !d.zero_total).map(|d| (d.date, d)).collect();
    let mut pairs = Vec::new();
    for (date, day) in &by_date {
        let Some(next_date) = date.checked_add_days(Days::new(1)) else {
            continue;
        };
        if let Some(next) = by_date.get(&next_date) {
            if let Some(r) = day_correlation(day, next, grid) {
                pairs.push(DayPairCorrelation {
                    first: date.to_string(),
                    second: next_date.to_string(),
                    correlation: r,
                });
            }
        }
    }
    let summary = (pairs.len() >= 2).then(|| {
        let m = Moments::from_slice(&pairs.iter().map(|p| p.correlation).collect::<Vec<_>>());
        let se = m.standard_error();
        CorrelationSummary {
            n_pairs: pairs.len(),
            average: m.mean(),
            sd: m.sd(),
            skewness: m.skewness(),
            standard_error: se,
            t_statistic: if se > 0.0 { m.mean() / se } else { 0.0 },
        }
    });
    CorrelationReport { pairs, summary }
}

/// Bin-wise mean and standard deviation across days.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMoments {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub n_days: usize,
}

/// Empirical moments of the retained (positive-total) days on `grid`.
pub fn empirical_moments(days: &[DailySeries], grid: &[f64]) -> Result<EmpiricalMoments> {
    let retained: Vec<&DailySeries> = days.iter().filter(|d| !d.zero_total).collect();
    if retained.len() < 2 {
        return Err(Error::Degenerate(format!(
            "at least two days with a positive total are required, got {}",
            retained.len()
        )));
    }
    let mut acc = vec![Moments::new(); grid.len()];
    for d in &retained {
        for (m, &s) in acc.iter_mut().zip(grid) {
            m.push(d.value_at(s));
        }
    }
    Ok(EmpiricalMoments {
        grid: grid.to_vec(),
        mean: acc.iter().map(Moments::mean).collect(),
        sd: acc.iter().map(Moments::sd).collect(),
        n_days: retained.len(),
    })
}

/// Settings of both fitting stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// Number of equal sub-brackets of `[ln eps_lo, ln eps_hi]` searched.
    pub starts: usize,
    /// Golden-section tolerance on `ln eps`.
    pub eps_tol: f64,
    pub max_iterations: usize,
    /// Interior fitting grid bounds.
    pub grid_lo: f64,
    pub grid_hi: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            eps_lo: 1e-3,
            eps_hi: 10.0,
            starts: 5,
            eps_tol: 1e-10,
            max_iterations: 200,
            grid_lo: 0.01,
            grid_hi: 0.99,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.eps_lo > 0.0 && self.eps_hi > self.eps_lo && self.eps_hi.is_finite()) {
            return Err(Error::Argument(format!(
                "epsilon bracket [{}, {}] must be positive and non-empty",
                self.eps_lo, self.eps_hi
            )));
        }
        if self.starts == 0 || !(self.eps_tol > 0.0) {
            return Err(Error::Argument("need at least one start and a positive tolerance".into()));
        }
        Ok(())
    }
}

/// Golden-section run on one sub-bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartResult {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub epsilon: f64,
    pub sse: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStageDiagnostics {
    pub evaluations: usize,
    pub converged: bool,
    /// Index of the winning start.
    pub winner: usize,
    pub starts: Vec<StartResult>,
    pub epsilon_at_bound: bool,
    /// `a0 = 0`.
    pub a0_lower_bound_active: bool,
    /// `a1 = -a0`.
    pub a1_lower_bound_active: bool,
}

/// Stage-1 result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanFit {
    pub a0: f64,
    pub a1: f64,
    pub epsilon: f64,
    pub rmse: f64,
    pub diagnostics: MeanStageDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarStageDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `kappa0 = 0`.
    pub kappa0_lower_bound_active: bool,
    /// `kappa1 = -kappa0`.
    pub kappa1_lower_bound_active: bool,
}

/// Stage-2 result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarFit {
    pub kappa0: f64,
    pub kappa1: f64,
    pub rmse: f64,
    pub diagnostics: VarStageDiagnostics,
}

/// Both stages together.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub a0: f64,
    pub a1: f64,
    pub epsilon: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub n_days: usize,
    pub n_excluded: usize,
    pub grid_points: usize,
    pub mean_stage: MeanStageDiagnostics,
    pub var_stage: VarStageDiagnostics,
}

impl FitResult {
    pub fn params(&self) -> ApplicationParams {
        ApplicationParams {
            a0: self.a0,
            a1: self.a1,
            kappa0: self.kappa0,
            kappa1: self.kappa1,
            epsilon: self.epsilon,
        }
    }
}

fn check_series(grid: &[f64], values: &[f64], what: &str) -> Result<()> {
    if grid.len() != values.len() || grid.len() < 3 {
        return Err(Error::Argument(format!("{what}: need equally long grid and values with at least 3 points")));
    }
    if grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::Domain(format!("{what}: fitting grid must lie in (0, 1)")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("{what}: values must be finite")));
    }
    Ok(())
}

/// Least squares `min |b_p p + b_q q - y|` over `p, q >= 0`; returns the
/// coefficients and the residual sum of squares.
fn nonneg_lsq2(bp: &[f64], bq: &[f64], y: &[f64]) -> ([f64; 2], f64) {
    let sse = |p: f64, q: f64| -> f64 {
        bp.iter()
            .zip(bq)
            .zip(y)
            .map(|((a, b), y)| {
                let r = p * a + q * b - y;
                r * r
            })
            .sum()
    };
    let one_dim = |b: &[f64]| -> f64 {
        let bb: f64 = b.iter().map(|v| v * v).sum();
        if bb > 0.0 {
            (b.iter().zip(y).map(|(b, y)| b * y).sum::<f64>() / bb).max(0.0)
        } else {
            0.0
        }
    };
    let n = y.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { bp[i] } else { bq[i] });
    let rhs = DVector::from_column_slice(y);
    let mut candidates = Vec::with_capacity(3);
    if let Ok(sol) = design.svd(true, true).solve(&rhs, 1e-14) {
        if sol[0] >= 0.0 && sol[1] >= 0.0 {
            candidates.push([sol[0], sol[1]]);
        }
    }
    candidates.push([one_dim(bp), 0.0]);
    candidates.push([0.0, one_dim(bq)]);
    candidates
        .into_iter()
        .map(|c| (c, sse(c[0], c[1])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("candidate list is non-empty")
}

fn unit(epsilon: f64) -> ApplicationParams {
    ApplicationParams {
        a0: 0.0,
        a1: 0.0,
        kappa0: 0.0,
        kappa1: 0.0,
        epsilon,
    }
}

/// Mean basis functions for `a = t` and `a = 1 - t` at `epsilon`.
fn mean_basis(grid: &[f64], epsilon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    // a0 + a1 (1 - t) equals t for (a0, a1) = (1, -1) and 1 - t for (0, 1).
    let rise = ApplicationParams { a0: 1.0, a1: -1.0, ..unit(epsilon) };
    let fall = ApplicationParams { a1: 1.0, ..unit(epsilon) };
    let mut bp = Vec::with_capacity(grid.len());
    let mut bq = Vec::with_capacity(grid.len());
    for &t in grid {
        bp.push(mean_closed(&rise, t)?);
        bq.push(mean_closed(&fall, t)?);
    }
    Ok((bp, bq))
}

fn rmse(residuals: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for r in residuals {
        s += r * r;
        n += 1;
    }
    (s / n.max(1) as f64).sqrt()
}

/// Stage 1: fits `(a0, a1, eps)` to an empirical mean on an interior grid.
pub fn fit_mean_stage(grid: &[f64], mean: &[f64], opts: &FitOptions) -> Result<MeanFit> {
    opts.validate()?;
    check_series(grid, mean, "mean stage")?;
    let mut evaluations = 0usize;
    let mut profile = |ln_eps: f64| -> Result<([f64; 2], f64)> {
        evaluations += 1;
        let (bp, bq) = mean_basis(grid, ln_eps.exp())?;
        Ok(nonneg_lsq2(&bp, &bq, mean))
    };

    let (lo, hi) = (opts.eps_lo.ln(), opts.eps_hi.ln());
    let width = (hi - lo) / opts.starts as f64;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut starts = Vec::with_capacity(opts.starts);
    for s in 0..opts.starts {
        let (mut a, mut b) = (lo + width * s as f64, lo + width * (s + 1) as f64);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = profile(c)?.1;
        let mut fd = profile(d)?.1;
        let mut iterations = 0;
        while b - a > opts.eps_tol && iterations < opts.max_iterations {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = profile(c)?.1;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = profile(d)?.1;
            }
            iterations += 1;
        }
        // Compare the interior optimum with the sub-bracket ends so that a
        // monotone profile settles exactly on the boundary.
        let mut best = (0.5 * (a + b), profile(0.5 * (a + b))?.1);
        for end in [lo + width * s as f64, lo + width * (s + 1) as f64] {
            let f = profile(end)?.1;
            if f < best.1 {
                best = (end, f);
            }
        }
        starts.push(StartResult {
            eps_lo: (lo + width * s as f64).exp(),
            eps_hi: (lo + width * (s + 1) as f64).exp(),
            epsilon: best.0.exp(),
            sse: best.1,
            converged: b - a <= opts.eps_tol,
        });
    }
    let winner = starts
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.sse.total_cmp(&y.1.sse))
        .map(|(i, _)| i)
        .expect("at least one start");
    let mut ln_eps = starts[winner].epsilon.ln();
    let ([mut p, mut q], _) = profile(ln_eps)?;
    // With a vanishing mean every epsilon fits equally well; report the upper bracket end.
    if p == 0.0 && q == 0.0 {
        ln_eps = hi;
        let sol = profile(ln_eps)?.0;
        p = sol[0];
        q = sol[1];
    }
    let epsilon = ln_eps.exp();
    let (bp, bq) = mean_basis(grid, epsilon)?;
    let fit_rmse = rmse((0..grid.len()).map(|i| p * bp[i] + q * bq[i] - mean[i]));
    let near = |x: f64, y: f64| (x - y).abs() <= 1e3 * opts.eps_tol;
    Ok(MeanFit {
        a0: p,
        a1: q - p,
        epsilon,
        rmse: fit_rmse,
        diagnostics: MeanStageDiagnostics {
            evaluations,
            converged: starts[winner].converged,
            winner,
            epsilon_at_bound: near(ln_eps, lo) || near(ln_eps, hi),
            a0_lower_bound_active: p == 0.0,
            a1_lower_bound_active: q == 0.0,
            starts,
        },
    })
}

/// Variance basis functions for `sigma^2 = t` and `sigma^2 = 1 - t`.
fn var_basis(grid: &[f64], a0: f64, a1: f64, epsilon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = ApplicationParams { a0, a1, ..unit(epsilon) };
    let mut bp = Vec::with_capacity(grid.len());
    let mut bq = Vec::with_capacity(grid.len());
    for &t in grid {
        let v0 = var_closed(&ApplicationParams { kappa0: 1.0, ..base }, t)?;
        let v1 = var_closed(&ApplicationParams { kappa1: 1.0, ..base }, t)?;
        bp.push(v0 - v1);
        bq.push(v1);
    }
    Ok((bp, bq))
}

/// Stage 2: fits `(kappa0, kappa1)` to an empirical standard deviation with
/// the stage-1 parameters held fixed.
pub fn fit_var_stage(grid: &[f64], sd: &[f64], mean_fit: &MeanFit, opts: &FitOptions) -> Result<VarFit> {
    opts.validate()?;
    check_series(grid, sd, "variance stage")?;
    if sd.iter().any(|&s| s < 0.0) {
        return Err(Error::Argument("standard deviations must be non-negative".into()));
    }
    let (bp, bq) = var_basis(grid, mean_fit.a0, mean_fit.a1, mean_fit.epsilon)?;
    let sd_sq: Vec<f64> = sd.iter().map(|s| s * s).collect();
    let ([mut p, mut q], _) = nonneg_lsq2(&bp, &bq, &sd_sq);

    let model_sd = |p: f64, q: f64| -> Vec<f64> {
        bp.iter().zip(&bq).map(|(a, b)| (p * a + q * b).max(0.0).sqrt()).collect()
    };
    let cost = |p: f64, q: f64| -> f64 { model_sd(p, q).iter().zip(sd).map(|(m, s)| (m - s) * (m - s)).sum() };

    let mut iterations = 0;
    let mut converged = p == 0.0 && q == 0.0;
    let mut lambda = 1e-3;
    let mut current = cost(p, q);
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let m = model_sd(p, q);
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for i in 0..grid.len() {
            if m[i] <= 0.0 {
                continue;
            }
            let j = [bp[i] / (2.0 * m[i]), bq[i] / (2.0 * m[i])];
            let r = m[i] - sd[i];
            for a in 0..2 {
                jtr[a] += j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let a11 = jtj[0][0] * (1.0 + lambda);
            let a22 = jtj[1][1] * (1.0 + lambda);
            let det = a11 * a22 - jtj[0][1] * jtj[1][0];
            if det <= 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dp = -(a22 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let dq = -(a11 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (np, nq) = ((p + dp).max(0.0), (q + dq).max(0.0));
            let trial = cost(np, nq);
            if trial <= current {
                let step = (np - p).abs().max((nq - q).abs());
                let scale = p.abs().max(q.abs()).max(f64::MIN_POSITIVE);
                p = np;
                q = nq;
                let gain = current - trial;
                current = trial;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if step <= 1e-12 * scale || gain <= 1e-15 * current.max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No decrease for any damping: the current point is stationary on the box.
            converged = true;
        }
    }
    let m = model_sd(p, q);
    Ok(VarFit {
        kappa0: p,
        kappa1: q - p,
        rmse: rmse(m.iter().zip(sd).map(|(m, s)| m - s)),
        diagnostics: VarStageDiagnostics {
            iterations,
            converged,
            kappa0_lower_bound_active: p == 0.0,
            kappa1_lower_bound_active: q == 0.0,
        },
    })
}

/// Runs both stages on empirical moments.
pub fn fit_moments(emp: &EmpiricalMoments, opts: &FitOptions) -> Result<(MeanFit, VarFit)> {
    let keep: Vec<usize> = (0..emp.grid.len())
        .filter(|&i| emp.grid[i] >= opts.grid_lo && emp.grid[i] <= opts.grid_hi)
        .collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let (grid, mean, sd) = (pick(&emp.grid), pick(&emp.mean), pick(&emp.sd));
    let stage1 = fit_mean_stage(&grid, &mean, opts)?;
    let stage2 = fit_var_stage(&grid, &sd, &stage1, opts)?;
    Ok((stage1, stage2))
}

/// Normalized days in, identified parameters out.
pub fn fit(data: &NormalizedData, opts: &FitOptions) -> Result<FitResult> {
    let grid = default_grid(&data.days, opts.grid_lo, opts.grid_hi)?;
    let emp = empirical_moments(&data.days, &grid)?;
    let (stage1, stage2) = fit_moments(&emp, opts)?;
    Ok(FitResult {
        a0: stage1.a0,
        a1: stage1.a1,
        epsilon: stage1.epsilon,
        kappa0: stage2.kappa0,
        kappa1: stage2.kappa1,
        rmse_mean: stage1.rmse,
        rmse_sd: stage2.rmse,
        n_days: emp.n_days,
        n_excluded: data.excluded(),
        grid_points: grid.len(),
        mean_stage: stage1.diagnostics,
        var_stage: stage2.diagnostics,
    })
}

/// Settings of the synthetic data generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOptions {
    pub start_date: NaiveDate,
    pub sunrise: NaiveTime,
    pub bin_minutes: u32,
    /// Fish per unit of `X`: bin counts are Poisson with mean
    /// `count_scale * (bin average of X)`.
    pub count_scale: f64,
    /// Simulation step on the unit day.
    pub dt: f64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(2023, 4, 1).expect("valid date"),
            sunrise: NaiveTime::from_hms_opt(5, 0, 0).expect("valid time"),
            bin_minutes: 10,
            count_scale: 1e4,
            dt: 1e-4,
        }
    }
}

/// A generated dataset in the raw ingestion format.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub raw: Vec<RawRecord>,
    pub sun: Vec<SunRecord>,
}

struct BinObserver {
    grid: Vec<f64>,
    edges: Vec<f64>,
}

impl PathObserver for BinObserver {
    type Acc = Vec<Vec<f64>>;
    fn init(&self) -> Self::Acc {
        Vec::new()
    }
    fn observe(&self, acc: &mut Self::Acc, _index: usize, path: &[f64]) {
        let mut out = Vec::with_capacity(self.edges.len() - 1);
        bin_averages(&self.grid, path, &self.edges, &mut out);
        acc.push(out);
    }
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        into.extend(other);
    }
}

/// Simulates `n_days` independent unit-day bridge paths of `model` and turns
/// each into `bins_per_day` Poisson bin counts, with matching sunrise/sunset
/// rows. Day `i` uses simulation stream `i` of `seed`.
pub fn generate_synthetic(
    model: &BridgeModel,
    n_days: usize,
    bins_per_day: usize,
    seed: u64,
    opts: &SyntheticOptions,
) -> Result<SyntheticData> {
    if bins_per_day < 10 {
        return Err(Error::Argument(format!("at least 10 bins per day are required, got {bins_per_day}")));
    }
    if (model.horizon - 1.0).abs() > 1e-12 {
        return Err(Error::Argument("synthetic days require a unit-day model (T = 1)".into()));
    }
    if !(opts.count_scale > 0.0 && opts.count_scale.is_finite()) || opts.bin_minutes == 0 {
        return Err(Error::Argument("count scale and bin width must be positive".into()));
    }
    let day_minutes = bins_per_day as u64 * opts.bin_minutes as u64;
    let sunrise_min = opts.sunrise.num_seconds_from_midnight() as u64 / 60;
    if sunrise_min + day_minutes >= 24 * 60 {
        return Err(Error::Argument("daytime does not fit in one calendar day".into()));
    }
    if n_days == 0 {
        return Ok(SyntheticData {
            raw: Vec::new(),
            sun: Vec::new(),
        });
    }
    let plan = StepPlan::bridge(model, opts.dt)?;
    let observer = BinObserver {
        grid: plan.grid(),
        edges: (0..=bins_per_day).map(|j| j as f64 / bins_per_day as f64).collect(),
    };
    let averages = simulate::run(&plan, n_days, seed, &observer)?;

    let time_at = |minute: u64| -> NaiveTime {
        NaiveTime::from_num_seconds_from_midnight_opt((minute * 60) as u32, 0).expect("minute within a day")
    };
    let sunset = time_at(sunrise_min + day_minutes);
    let count_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut raw = Vec::with_capacity(n_days * bins_per_day);
    let mut sun = Vec::with_capacity(n_days);
    for (day, bins) in averages.iter().enumerate() {
        let date = opts
            .start_date
            .checked_add_days(Days::new(day as u64))
            .ok_or_else(|| Error::Argument("date range overflows".into()))?;
        sun.push(SunRecord {
            date,
            sunrise: time_at(sunrise_min),
            sunset,
        });
        let mut rng = path_rng(count_seed, day);
        for (j, &avg) in bins.iter().enumerate() {
            let lambda = opts.count_scale * avg.max(0.0);
            let count = if lambda > 0.0 {
                let poisson = Poisson::new(lambda).map_err(|e| Error::Numerical(format!("Poisson mean {lambda}: {e}")))?;
                poisson.sample(&mut rng) as u64
            } else {
                0
            };
            raw.push(RawRecord {
                date,
                bin_start: time_at(sunrise_min + j as u64 * opts.bin_minutes as u64),
                count,
            });
        }
    }
    Ok(SyntheticData { raw, sun })
}
