//! Monte Carlo paths of the bridge and of the controlled equation.
//!
//! The scheme is full-truncation Euler on a uniform grid: an auxiliary state
//! `Y` is propagated with its positive part in the coefficients and the
//! reported path is that positive part,
//!
//! ```text
//! Y_{k+1} = Y_k + (a_k - u_k Y_k^+) dt + sigma_k sqrt(u_k Y_k^+ dt) xi_k,
//! X_k     = Y_k^+,
//! ```
//!
//! with `u = h` for the bridge. Clipping `Y` itself at every step instead
//! would add mass each time the noise pushes a small state below zero, which
//! biases the mean upwards markedly in the high-volatility regime.
//!
//! Close to the terminal time the rate is of order `1 / (T - t)` and Euler
//! breaks down once `u dt` is no longer small: the noise dwarfs the state and
//! truncation inflates the mean several-fold on the last few dozen steps.
//! Steps with `u_k dt >` [`STIFF`] therefore use the exact transition of the
//! square-root process after the time change `tau = int u ds`, with the source
//! frozen at its step average (a Poisson mixture of Gamma variables). The
//! bridge is integrated on `[0, T - dt]` and its terminal node is set to 0;
//! the reversion rate is never evaluated at `T`.
//!
//! Path `i` draws its normals from `ChaCha8Rng::seed_from_u64(seed)` switched
//! to stream `i`, so every path is a pure function of `(seed, i)`. Paths are
//! processed in fixed blocks of [`BLOCK`] by the rayon pool and per-block
//! results are merged in block order: results do not depend on the number of
//! worker threads. Large runs never store the ensemble; statistics are
//! gathered through [`PathObserver`]s while paths stream past.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BridgeModel, Weight};
use crate::stats::Moments;

/// Number of paths per work unit.
pub const BLOCK: usize = 1024;

/// Discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Full-truncation Euler with exact transitions on stiff steps.
    TruncatedEulerExactStiff,
}

impl Scheme {
    pub fn id(self) -> u32 {
        match self {
            Scheme::TruncatedEulerExactStiff => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            1 => Some(Scheme::TruncatedEulerExactStiff),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TruncatedEulerExactStiff => "truncated_euler_exact_stiff",
        }
    }
}

/// Steps with `u_k dt` above this use the exact transition instead of Euler.
pub const STIFF: f64 = 0.01;

/// One step of the scheme.
#[derive(Debug, Clone, Copy)]
enum StepKind {
    /// Full-truncation Euler with `a_k dt`, `u_k dt` and `sqrt(sigma_k^2 u_k dt)`.
    Euler { drift: f64, decay: f64, diffusion: f64 },
    /// Exact transition of the time-changed square-root process:
    /// `X' = survive X + mean_in` when `scale = 0`, otherwise
    /// `X' = 2 scale Gamma(half_dof + N)` with `N ~ Poisson(survive X / (2 scale))`.
    Exact { survive: f64, mean_in: f64, scale: f64, half_dof: f64 },
}

/// Per-step coefficients of the scheme on a uniform grid of `K` steps.
#[derive(Debug, Clone)]
pub struct StepPlan {
    horizon: f64,
    steps: usize,
    dt: f64,
    x0: f64,
    /// Kind and coefficients of each simulated step.
    kinds: Vec<StepKind>,
    /// Rate `u_k` (or `h_k`) at nodes `0..K`.
    rate: Vec<f64>,
    /// Terminal node forced to zero.
    pinned: bool,
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!("time step must be positive, got {dt}")));
    }
    if dt > 1e-3 * horizon * (1.0 + 1e-12) {
        return Err(Error::Argument(format!(
            "time step {dt} is too coarse: dt <= 1e-3 T = {} is required",
            1e-3 * horizon
        )));
    }
    let k = (horizon / dt).round();
    if k > u32::MAX as f64 {
        return Err(Error::Argument(format!("time step {dt} gives too many steps")));
    }
    Ok(k as usize)
}

impl StepPlan {
    /// Plan for the bridge of `model`: steps `0..K-1` are simulated and `X_T = 0`.
    pub fn bridge(model: &BridgeModel, dt: f64) -> Result<Self> {
        model.validate()?;
        let reversion = model.reversion()?;
        let integrated = |a: f64, b: f64| Ok(reversion.cumulative(b)? - reversion.cumulative(a)?);
        Self::build(model, dt, 0.0, true, |t| reversion.rate(t), integrated).map_err(|e| match e {
            Error::Argument(msg) if msg.contains("too coarse") => Error::Argument(format!(
                "{msg}; near the blow-up of h the bridge simulates [0, T - dt] only and sets X_T = 0, \
                 so refine dt rather than the final interval"
            )),
            other => other,
        })
    }

    /// Plan for the controlled equation with rate `control(t)` in place of `h`,
    /// started at `x0`; all `K` steps are simulated and nothing is pinned.
    pub fn controlled(
        model: &BridgeModel,
        control: impl Fn(f64) -> Result<f64>,
        dt: f64,
        x0: f64,
    ) -> Result<Self> {
        if !(x0 >= 0.0 && x0.is_finite()) {
            return Err(Error::Argument(format!("initial state must be non-negative, got {x0}")));
        }
        // The reversion rate of `model` is not used here, only its source and volatility.
        if !(model.horizon > 0.0 && model.horizon.is_finite()) {
            return Err(Error::Argument(format!("T must be positive, got {}", model.horizon)));
        }
        if !model.source.is_non_negative() || !model.vol_sq.is_non_negative() {
            return Err(Error::Argument("source and squared volatility must be non-negative".into()));
        }
        // Two-point Gauss-Legendre never evaluates the control at the step ends,
        // where a rate such as `h` may be unbounded.
        let integrated = |a: f64, b: f64| {
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let g = half / 3f64.sqrt();
            Ok(half * (control(mid - g)? + control(mid + g)?))
        };
        Self::build(model, dt, x0, false, &control, integrated)
    }

    fn build(
        model: &BridgeModel,
        dt: f64,
        x0: f64,
        pinned: bool,
        rate_at: impl Fn(f64) -> Result<f64>,
        integrated: impl Fn(f64, f64) -> Result<f64>,
    ) -> Result<Self> {
        let horizon = model.horizon;
        let steps = step_count(horizon, dt)?;
        let dt = horizon / steps as f64;
        let simulated = if pinned { steps - 1 } else { steps };
        let mut rate = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = k as f64 * dt;
            let u = rate_at(t)?;
            if !(u >= 0.0 && u.is_finite()) {
                return Err(Error::Argument(format!("control must be finite and non-negative; got {u} at t = {t}")));
            }
            rate.push(u);
        }
        let mut kinds = Vec::with_capacity(simulated);
        for (k, &u) in rate.iter().enumerate().take(simulated) {
            let t = k as f64 * dt;
            let (a, s2) = (model.source_at(t), model.vol_sq_at(t));
            if u * dt <= STIFF {
                kinds.push(StepKind::Euler {
                    drift: a * dt,
                    decay: u * dt,
                    diffusion: (s2 * u * dt).sqrt(),
                });
                continue;
            }
            let total = integrated(t, (k + 1) as f64 * dt)?;
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Argument(format!("integrated rate {total} over the step at t = {t}")));
            }
            // With tau = int u ds the equation reads dX = (a/u - X) dtau + sigma sqrt(X) dW;
            // a/u is frozen at its step average a dt / tau.
            let survive = (-total).exp();
            let theta = a * dt / total;
            kinds.push(StepKind::Exact {
                survive,
                mean_in: theta * (1.0 - survive),
                scale: 0.25 * s2 * (1.0 - survive),
                half_dof: if s2 > 0.0 { 2.0 * theta / s2 } else { 0.0 },
            });
        }
        Ok(Self {
            horizon,
            steps,
            dt,
            x0,
            kinds,
            rate,
            pinned,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_pinned(&self) -> bool {
        self.pinned
    }

    /// Rates `u_k` at nodes `0..K`.
    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Time of node `k`; the last node is exactly `T`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    /// Node index closest to `t`.
    pub fn node(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }

    /// Number of leading steps that use the Euler update.
    fn euler_prefix(&self) -> usize {
        self.kinds
            .iter()
            .position(|k| matches!(k, StepKind::Exact { .. }))
            .unwrap_or(self.kinds.len())
    }

    /// One full-truncation Euler step of the auxiliary state `y`; `k` must be an Euler step.
    #[inline]
    fn euler(&self, k: usize, y: f64, xi: f64) -> f64 {
        match self.kinds[k] {
            StepKind::Euler { drift, decay, diffusion } => {
                let x = y.max(0.0);
                y + drift - decay * x + diffusion * x.sqrt() * xi
            }
            StepKind::Exact { .. } => unreachable!("step {k} is not an Euler step"),
        }
    }

    /// Advances the auxiliary state over step `k`.
    #[inline]
    fn advance(&self, rng: &mut ChaCha8Rng, k: usize, y: f64) -> f64 {
        match self.kinds[k] {
            StepKind::Euler { drift, decay, diffusion } => {
                let xi: f64 = rng.sample(StandardNormal);
                let x = y.max(0.0);
                y + drift - decay * x + diffusion * x.sqrt() * xi
            }
            StepKind::Exact { survive, mean_in, scale, half_dof } => {
                let x = y.max(0.0);
                if scale == 0.0 {
                    return survive * x + mean_in;
                }
                let rate = 0.5 * survive * x / scale;
                let jumps = if rate > 0.0 {
                    Poisson::new(rate).map_or(rate.round(), |p| p.sample(rng))
                } else {
                    0.0
                };
                let shape = half_dof + jumps;
                if shape > 0.0 {
                    Gamma::new(shape, 1.0).map_or(shape, |g| g.sample(rng)) * 2.0 * scale
                } else {
                    0.0
                }
            }
        }
    }

    /// Fills `out` (length `K + 1`) with path `index` drawn from `rng`.
    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64], index: usize) -> Result<()> {
        let mut y = self.x0;
        out[0] = y;
        for k in 0..self.kinds.len() {
            y = self.advance(rng, k, y);
            if !y.is_finite() {
                return Err(Error::NonFinite { path: index, step: k + 1 });
            }
            out[k + 1] = y.max(0.0);
        }
        if self.pinned {
            out[self.steps] = 0.0;
        }
        Ok(())
    }
}

/// The generator of path `index` under `seed`.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Streaming consumer of simulated paths. Accumulators of different blocks
/// are merged in block order.
pub trait PathObserver: Sync {
    type Acc: Send;
    fn init(&self) -> Self::Acc;
    fn observe(&self, acc: &mut Self::Acc, index: usize, path: &[f64]);
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc);
}

impl<A: PathObserver, B: PathObserver> PathObserver for (A, B) {
    type Acc = (A::Acc, B::Acc);
    fn init(&self) -> Self::Acc {
        (self.0.init(), self.1.init())
    }
    fn observe(&self, acc: &mut Self::Acc, index: usize, path: &[f64]) {
        self.0.observe(&mut acc.0, index, path);
        self.1.observe(&mut acc.1, index, path);
    }
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        self.0.merge(&mut into.0, other.0);
        self.1.merge(&mut into.1, other.1);
    }
}

/// Simulates `n_paths` paths of `plan` and feeds them to `observer`.
pub fn run<O: PathObserver>(plan: &StepPlan, n_paths: usize, seed: u64, observer: &O) -> Result<O::Acc> {
    if n_paths == 0 {
        return Err(Error::Argument("at least one path is required".into()));
    }
    let blocks = n_paths.div_ceil(BLOCK);
    let results: Vec<Result<O::Acc>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = observer.init();
            let mut buf = vec![0.0; plan.steps + 1];
            for index in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                let mut rng = path_rng(seed, index);
                plan.fill(&mut rng, &mut buf, index)?;
                observer.observe(&mut acc, index, &buf);
            }
            Ok(acc)
        })
        .collect();
    let mut total = observer.init();
    for r in results {
        observer.merge(&mut total, r?);
    }
    Ok(total)
}

/// Moments of `X` at selected nodes.
pub struct NodeMoments {
    pub nodes: Vec<usize>,
}

impl PathObserver for NodeMoments {
    type Acc = Vec<Moments>;
    fn init(&self) -> Self::Acc {
        vec![Moments::new(); self.nodes.len()]
    }
    fn observe(&self, acc: &mut Self::Acc, _index: usize, path: &[f64]) {
        for (m, &k) in acc.iter_mut().zip(&self.nodes) {
            m.push(path[k]);
        }
    }
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        for (a, b) in into.iter_mut().zip(&other) {
            a.merge(b);
        }
    }
}

/// Values of `X` at selected nodes, in path order.
pub struct NodeSamples {
    pub nodes: Vec<usize>,
}

impl PathObserver for NodeSamples {
    type Acc = Vec<Vec<f64>>;
    fn init(&self) -> Self::Acc {
        vec![Vec::new(); self.nodes.len()]
    }
    fn observe(&self, acc: &mut Self::Acc, _index: usize, path: &[f64]) {
        for (v, &k) in acc.iter_mut().zip(&self.nodes) {
            v.push(path[k]);
        }
    }
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        for (a, b) in into.iter_mut().zip(other) {
            a.extend(b);
        }
    }
}

/// Path-wise extrema over the whole grid: the overall minimum and the
/// values at the first and last node.
pub struct PathBounds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max_abs_start: f64,
    pub max_abs_end: f64,
}

impl PathObserver for PathBounds {
    type Acc = Bounds;
    fn init(&self) -> Bounds {
        Bounds {
            min: f64::INFINITY,
            max_abs_start: 0.0,
            max_abs_end: 0.0,
        }
    }
    fn observe(&self, acc: &mut Bounds, _index: usize, path: &[f64]) {
        acc.min = path.iter().copied().fold(acc.min, f64::min);
        acc.max_abs_start = acc.max_abs_start.max(path[0].abs());
        acc.max_abs_end = acc.max_abs_end.max(path[path.len() - 1].abs());
    }
    fn merge(&self, into: &mut Bounds, other: Bounds) {
        into.min = into.min.min(other.min);
        into.max_abs_start = into.max_abs_start.max(other.max_abs_start);
        into.max_abs_end = into.max_abs_end.max(other.max_abs_end);
    }
}

/// Counts paths that touch zero at some node inside `[first, last]`.
pub struct ZeroHits {
    pub first: usize,
    pub last: usize,
}

impl PathObserver for ZeroHits {
    type Acc = (u64, u64);
    fn init(&self) -> Self::Acc {
        (0, 0)
    }
    fn observe(&self, acc: &mut Self::Acc, _index: usize, path: &[f64]) {
        acc.1 += 1;
        if path[self.first..=self.last].iter().any(|&x| x == 0.0) {
            acc.0 += 1;
        }
    }
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        into.0 += other.0;
        into.1 += other.1;
    }
}

/// A stored ensemble of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: Vec<f64>,
    pub n_paths: usize,
    /// Row-major `n_paths x (K + 1)` values.
    pub values: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
    pub scheme: Scheme,
}

/// Upper limit on stored values; larger runs must stream.
pub const MAX_STORED_VALUES: usize = 1 << 28;

struct Collect {
    width: usize,
}

impl PathObserver for Collect {
    type Acc = Vec<f64>;
    fn init(&self) -> Vec<f64> {
        Vec::new()
    }
    fn observe(&self, acc: &mut Vec<f64>, _index: usize, path: &[f64]) {
        debug_assert_eq!(path.len(), self.width);
        acc.extend_from_slice(path);
    }
    fn merge(&self, into: &mut Vec<f64>, other: Vec<f64>) {
        into.extend(other);
    }
}

const MAGIC: &[u8; 8] = b"FBPATHS1";

impl PathEnsemble {
    /// Simulates and stores every path of `plan`.
    pub fn simulate(plan: &StepPlan, n_paths: usize, seed: u64) -> Result<Self> {
        let width = plan.steps + 1;
        if n_paths.saturating_mul(width) > MAX_STORED_VALUES {
            return Err(Error::Argument(format!(
                "{n_paths} paths x {width} nodes is too large to store; use a streaming summary instead"
            )));
        }
        let values = run(plan, n_paths, seed, &Collect { width })?;
        Ok(Self {
            grid: plan.grid(),
            n_paths,
            values,
            seed,
            dt: plan.dt,
            scheme: Scheme::TruncatedEulerExactStiff,
        })
    }

    pub fn width(&self) -> usize {
        self.grid.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.width())
    }

    /// Feeds the stored paths to an observer, sequentially.
    pub fn visit<O: PathObserver>(&self, observer: &O) -> O::Acc {
        let mut acc = observer.init();
        for (i, p) in self.paths().enumerate() {
            observer.observe(&mut acc, i, p);
        }
        acc
    }

    /// Writes the binary format: magic, `n_paths`, `K`, `dt`, `seed`, scheme
    /// id, then the values as little-endian 64-bit floats, row-major.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.n_paths as u64).to_le_bytes())?;
        out.write_all(&((self.width() - 1) as u64).to_le_bytes())?;
        out.write_all(&self.dt.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.scheme.id().to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a path-ensemble file".into()));
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b8)?;
        let n_paths = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let steps = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let dt = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        input.read_exact(&mut b4)?;
        let scheme = Scheme::from_id(u32::from_le_bytes(b4))
            .ok_or_else(|| Error::Config("unknown scheme id".into()))?;
        let count = n_paths
            .checked_mul(steps + 1)
            .filter(|&c| c <= MAX_STORED_VALUES)
            .ok_or_else(|| Error::Config("ensemble header is implausibly large".into()))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let grid = (0..=steps).map(|k| if k == steps { dt * steps as f64 } else { k as f64 * dt }).collect();
        Ok(Self {
            grid,
            n_paths,
            values,
            seed,
            dt,
            scheme,
        })
    }
}

/// Simulates and stores `n_paths` bridge paths.
pub fn simulate_bridge(model: &BridgeModel, n_paths: usize, dt: f64, seed: u64) -> Result<PathEnsemble> {
    PathEnsemble::simulate(&StepPlan::bridge(model, dt)?, n_paths, seed)
}

/// Simulates and stores `n_paths` paths of the controlled equation.
pub fn simulate_controlled(
    model: &BridgeModel,
    control: impl Fn(f64) -> Result<f64>,
    n_paths: usize,
    dt: f64,
    seed: u64,
    x0: f64,
) -> Result<PathEnsemble> {
    PathEnsemble::simulate(&StepPlan::controlled(model, control, dt, x0)?, n_paths, seed)
}

/// Monte Carlo estimate of the control objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub n_paths: usize,
    /// Running cost `int (1/(m+1)) X u^{m+1} / w ds` over `[0, T - dt]`.
    pub running_mean: f64,
    pub running_se: f64,
    /// `X_T` as simulated (0 for the pinned bridge).
    pub terminal_mean: f64,
    pub terminal_se: f64,
    pub eta: Option<f64>,
    /// Running cost plus `X_T / eta`, when a penalty is given.
    pub penalized_mean: Option<f64>,
    pub penalized_se: Option<f64>,
    /// Per-path objective (penalized when a penalty is given), in path order.
    #[serde(skip)]
    pub per_path: Vec<f64>,
}

struct ObjectiveObserver {
    /// Trapezoid weight times `u^{m+1} / ((m+1) w)` at nodes `0..=K-1`.
    coef: Vec<f64>,
    inv_eta: f64,
}

impl PathObserver for ObjectiveObserver {
    type Acc = (Moments, Moments, Vec<f64>);
    fn init(&self) -> Self::Acc {
        (Moments::new(), Moments::new(), Vec::new())
    }
    fn observe(&self, acc: &mut Self::Acc, _index: usize, path: &[f64]) {
        let running: f64 = self.coef.iter().zip(path).map(|(c, x)| c * x).sum();
        let terminal = path[path.len() - 1];
        acc.0.push(running);
        acc.1.push(terminal);
        acc.2.push(running + self.inv_eta * terminal);
    }
    fn merge(&self, into: &mut Self::Acc, other: Self::Acc) {
        into.0.merge(&other.0);
        into.1.merge(&other.1);
        into.2.extend(other.2);
    }
}

/// Estimates the objective of the control in `plan` with weight `weight`, and
/// its penalized version when `eta` is given. The running-cost integral is
/// truncated at `T - dt`, where the integrand of the bridge blows up.
pub fn empirical_objective(
    plan: &StepPlan,
    weight: &Weight,
    eta: Option<f64>,
    n_paths: usize,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    if let Some(e) = eta {
        if !(e > 0.0) {
            return Err(Error::Argument(format!("penalty eta must be positive, got {e}")));
        }
    }
    if (weight.horizon() - plan.horizon).abs() > 1e-12 * plan.horizon {
        return Err(Error::Argument("weight and simulation use different horizons".into()));
    }
    let m = weight.power();
    let last = plan.steps - 1;
    let mut coef = Vec::with_capacity(last + 1);
    for k in 0..=last {
        let t = plan.time(k);
        let trap = if k == 0 || k == last { 0.5 } else { 1.0 };
        let u = plan.rate[k];
        let cost = if u == 0.0 { 0.0 } else { u.powf(m + 1.0) / ((m + 1.0) * weight.w(t)?) };
        coef.push(trap * plan.dt * cost);
    }
    let observer = ObjectiveObserver {
        coef,
        inv_eta: eta.map_or(0.0, |e| 1.0 / e),
    };
    let (running, terminal, per_path) = run(plan, n_paths, seed, &observer)?;
    let penalized = eta.map(|_| Moments::from_slice(&per_path));
    Ok(ObjectiveEstimate {
        n_paths,
        running_mean: running.mean(),
        running_se: running.standard_error(),
        terminal_mean: terminal.mean(),
        terminal_se: terminal.standard_error(),
        eta,
        penalized_mean: penalized.map(|p| p.mean()),
        penalized_se: penalized.map(|p| p.standard_error()),
        per_path,
    })
}

/// Difference `X^{2dt}_t - X^{dt}_t` of coupled coarse and fine bridge paths
/// driven by the same Brownian increments (the coarse step uses the sum of two
/// fine normals). Returns the moments of the difference and of the fine value.
pub fn coupled_difference(
    model: &BridgeModel,
    dt_fine: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(Moments, Moments)> {
    let fine = StepPlan::bridge(model, dt_fine)?;
    let coarse = StepPlan::bridge(model, 2.0 * fine.dt)?;
    if coarse.steps * 2 != fine.steps {
        return Err(Error::Argument("coarse grid must have half as many steps".into()));
    }
    let k_coarse = coarse.node(t);
    if k_coarse == 0 || k_coarse >= coarse.steps {
        return Err(Error::Argument(format!("observation time {t} must be interior")));
    }
    if coarse.euler_prefix() < k_coarse || fine.euler_prefix() < 2 * k_coarse {
        return Err(Error::Argument(format!(
            "observation time {t} lies in the stiff region (u dt > {STIFF}) where steps are exact, not Euler"
        )));
    }
    if n_paths == 0 {
        return Err(Error::Argument("at least one path is required".into()));
    }
    if coarse.euler_prefix() < k_coarse || fine.euler_prefix() < 2 * k_coarse {
        return Err(Error::Argument(format!(
            "observation time {t} lies in the stiff region (u dt > {STIFF}) where steps are exact, not Euler"
        )));
    }
    let blocks = n_paths.div_ceil(BLOCK);
    let results: Vec<Result<(Moments, Moments)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut diff = Moments::new();
            let mut level = Moments::new();
            for index in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                let mut rng = path_rng(seed, index);
                let (mut xf, mut xc) = (0.0f64, 0.0f64);
                for kc in 0..k_coarse {
                    let mut sum = 0.0;
                    for j in 0..2 {
                        let k = 2 * kc + j;
                        let xi: f64 = rng.sample(StandardNormal);
                        sum += xi;
                        xf = fine.euler(k, xf, xi);
                    }
                    let xi = sum / std::f64::consts::SQRT_2;
                    xc = coarse.euler(kc, xc, xi);
                }
                if !(xf.is_finite() && xc.is_finite()) {
                    return Err(Error::NonFinite {
                        path: index,
                        step: 2 * k_coarse,
                    });
                }
                let (xc, xf) = (xc.max(0.0), xf.max(0.0));
                diff.push(xc - xf);
                level.push(xf);
            }
            Ok((diff, level))
        })
        .collect();
    let mut diff = Moments::new();
    let mut level = Moments::new();
    for r in results {
        let (d, l) = r?;
        diff.merge(&d);
        level.merge(&l);
    }
    Ok((diff, level))
}
