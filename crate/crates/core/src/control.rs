//! Closed-form solution of the penalized control problem and its limit.
//!
//! The value function is affine in the state, `Phi = A_t x + C_t`, with
//!
//! ```text
//! A_{eta,t} = (eta^{1/m} + J_t)^{-m},     J_t = (1/(m+1)) int_t^T z_s ds,
//! C_{eta,t} = int_t^T a_s A_{eta,s} ds,   u*_{eta,t} = z_t A_{eta,t}^{1/m},
//! ```
//!
//! where `z = w^{1/m}`; the limit problem is `eta = 0`. Near the terminal
//! time `A_t ~ (T - t)^{-alpha}` with `alpha = m c / (m + 1)`, so the cost
//! integral is finite exactly when `alpha < 1`. Integrals in `s` are taken
//! in the remaining time `r = T - s` after the substitution `r = tau^q`,
//! `q = 1/(1 - alpha)`, which makes the limit integrand bounded.

use std::cell::RefCell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BridgeModel, Reversion, ReversionSpec, TimeFn, Weight};
use crate::quad::{self, QuadOptions};

/// Value-function coefficients and optimal control on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltySolution {
    /// Penalty parameter; `None` for the limit problem.
    pub eta: Option<f64>,
    pub grid: Vec<f64>,
    /// Slope `A` of the value function in the state.
    pub a_coef: Vec<f64>,
    /// Intercept `C` of the value function.
    pub c_coef: Vec<f64>,
    pub u_star: Vec<f64>,
}

impl PenaltySolution {
    /// `A_t x + C_t` at grid node `k`.
    pub fn value(&self, k: usize, x: f64) -> f64 {
        self.a_coef[k] * x + self.c_coef[k]
    }

    pub fn is_limit(&self) -> bool {
        self.eta.is_none()
    }
}

const COST_OPTS: QuadOptions = QuadOptions {
    abs_tol: 1e-15,
    rel_tol: 1e-12,
    max_intervals: 4000,
};

/// Smallest remaining time ever handed to the coefficient evaluators.
const R_FLOOR: f64 = 1e-280;

/// Evaluates `A`, `u*` and the cost integrand for one penalty level.
struct Coefficients<'a> {
    weight: &'a Weight,
    source: &'a TimeFn,
    /// `eta^{1/m}`, zero for the limit problem.
    eta_root: f64,
}

impl<'a> Coefficients<'a> {
    fn new(weight: &'a Weight, source: &'a TimeFn, eta: Option<f64>) -> Self {
        let eta_root = eta.map_or(0.0, |e| e.powf(1.0 / weight.power()));
        Self {
            weight,
            source,
            eta_root,
        }
    }

    fn m(&self) -> f64 {
        self.weight.power()
    }

    fn horizon(&self) -> f64 {
        self.weight.horizon()
    }

    /// `eta^{1/m} + J` at remaining time `r`; equals `A^{-1/m}`.
    fn denominator(&self, r: f64) -> Result<f64> {
        Ok(self.eta_root + self.weight.integral_remaining(r)? / (self.m() + 1.0))
    }

    fn a_coef(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(if self.eta_root > 0.0 {
                self.eta_root.powf(-self.m())
            } else {
                f64::INFINITY
            });
        }
        Ok(self.denominator(r)?.powf(-self.m()))
    }

    fn u_star(&self, t: f64, r: f64) -> Result<f64> {
        if r <= 0.0 {
            let z = self.weight.terminal_z();
            return Ok(if self.eta_root > 0.0 {
                z / self.eta_root
            } else {
                f64::INFINITY
            });
        }
        let z = self.weight.ln_z_tr(t, r).exp();
        Ok(z / self.denominator(r)?)
    }

    /// Exponent `alpha` of the terminal growth `A ~ r^{-alpha}` of the limit.
    fn alpha(&self) -> f64 {
        let m = self.m();
        m * self.weight.tail_coefficient() / (m + 1.0)
    }

    /// Power `q` of the substitution `r = tau^q`.
    fn substitution_power(&self) -> f64 {
        let alpha = self.alpha();
        if self.eta_root == 0.0 && alpha < 1.0 {
            1.0 / (1.0 - alpha)
        } else {
            1.0
        }
    }

    /// `int a_s A_s ds` over times with remaining time in `[r_lo, r_hi]`.
    fn cost_between(&self, r_lo: f64, r_hi: f64) -> Result<f64> {
        if r_hi <= r_lo {
            return Ok(0.0);
        }
        let q = self.substitution_power();
        let horizon = self.horizon();
        let m = self.m();
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let integrand = |tau: f64| -> f64 {
            let ln_tau = tau.ln();
            let r = (q * ln_tau).exp().max(R_FLOOR);
            match self.denominator(r) {
                Ok(d) => {
                    let a = self.source.eval(horizon - r, horizon);
                    a * (q.ln() + (q - 1.0) * ln_tau - m * d.ln()).exp()
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let result = quad::integrate(integrand, r_lo.powf(1.0 / q), r_hi.powf(1.0 / q), COST_OPTS);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(result?.value)
    }

    /// `int a_s A_s ds` over remaining times `[e^{-y_hi}, e^{-y_lo}]`, in the
    /// logarithmic variable `y = -ln r`; used for cut-off studies where the
    /// integrand may be non-integrable.
    fn cost_between_log(&self, y_lo: f64, y_hi: f64) -> Result<f64> {
        let horizon = self.horizon();
        let m = self.m();
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let integrand = |y: f64| -> f64 {
            let r = (-y).exp().max(R_FLOOR);
            match self.denominator(r) {
                Ok(d) => {
                    let a = self.source.eval(horizon - r, horizon);
                    a * (-y - m * d.ln()).exp()
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let result = quad::integrate(integrand, y_lo, y_hi, COST_OPTS);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(result?.value)
    }
}

fn check_grid(grid: &[f64], horizon: f64, allow_end: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("time grid is empty".into()));
    }
    for pair in grid.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::Argument("time grid must be strictly increasing".into()));
        }
    }
    let first = grid[0];
    let last = *grid.last().unwrap();
    let last_ok = if allow_end { last <= horizon } else { last < horizon };
    if !(first >= 0.0) || !last_ok {
        let range = if allow_end { "[0, T]" } else { "[0, T)" };
        return Err(Error::Domain(format!(
            "time grid must lie in {range} with T = {horizon}; got [{first}, {last}]"
        )));
    }
    Ok(())
}

fn solve(weight: &Weight, source: &TimeFn, eta: Option<f64>, grid: &[f64]) -> Result<PenaltySolution> {
    let horizon = weight.horizon();
    let coeffs = Coefficients::new(weight, source, eta);
    let n = grid.len();
    let mut a_coef = Vec::with_capacity(n);
    let mut u_star = Vec::with_capacity(n);
    for &t in grid {
        let r = horizon - t;
        a_coef.push(coeffs.a_coef(r)?);
        u_star.push(coeffs.u_star(t, r)?);
    }
    // Accumulate the cost integral backwards from T node by node.
    let mut c_coef = vec![0.0; n];
    let mut acc = coeffs.cost_between(0.0, horizon - grid[n - 1])?;
    c_coef[n - 1] = acc;
    for k in (0..n - 1).rev() {
        acc += coeffs.cost_between(horizon - grid[k + 1], horizon - grid[k])?;
        c_coef[k] = acc;
    }
    Ok(PenaltySolution {
        eta,
        grid: grid.to_vec(),
        a_coef,
        c_coef,
        u_star,
    })
}

fn divergence(weight: &Weight) -> Error {
    Error::Divergence {
        c: weight.tail_coefficient(),
        m: weight.power(),
    }
}

/// Solves the penalized problem on `grid` (nodes in `[0, T]`; at `T` the
/// terminal values `A = 1/eta`, `C = 0` are returned).
pub fn solve_penalized(weight: &Weight, source: &TimeFn, eta: f64, grid: &[f64]) -> Result<PenaltySolution> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Argument(format!("penalty eta must be positive, got {eta}")));
    }
    check_grid(grid, weight.horizon(), true)?;
    solve(weight, source, Some(eta), grid)
}

/// Solves the limit problem from its closed form on `grid ⊂ [0, T)`.
pub fn solve_limit(weight: &Weight, source: &TimeFn, grid: &[f64]) -> Result<PenaltySolution> {
    if !weight.limit_admissible() {
        return Err(divergence(weight));
    }
    check_grid(grid, weight.horizon(), false)?;
    solve(weight, source, None, grid)
}

/// Maximum of `|u*_t - h_t| / h_t` over `grid` for the weight dual to `spec`.
/// The integral of `z` is always computed by quadrature here, so the result
/// is a genuine check of the duality rather than of an algebraic identity.
pub fn optimal_control_equals_h(spec: &ReversionSpec, horizon: f64, m: f64, grid: &[f64]) -> Result<f64> {
    let reversion = Reversion::new(spec.clone(), horizon)?;
    let weight = Weight::dual_to(&reversion, m)?;
    if !weight.limit_admissible() {
        return Err(divergence(&weight));
    }
    check_grid(grid, horizon, false)?;
    let mut worst: f64 = 0.0;
    for &t in grid {
        let integral = weight.integral_to_end_quadrature(t)?;
        let u = (m + 1.0) * weight.z(t)? / integral;
        let h = reversion.rate(t)?;
        worst = worst.max(((u - h) / h).abs());
    }
    Ok(worst)
}

/// Optimal feedback rate `u*_{eta,t} = z_t / (eta^{1/m} + J_t)` at a single
/// time, or its limit when `eta` is `None`; defined on `[0, T)`.
pub fn optimal_control(weight: &Weight, eta: Option<f64>, t: f64) -> Result<f64> {
    if let Some(e) = eta {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Argument(format!("penalty eta must be positive, got {e}")));
        }
    }
    let horizon = weight.horizon();
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::Domain(format!("optimal control is evaluated on [0, T); got t = {t}")));
    }
    // A zero source is irrelevant for the control.
    let source = TimeFn::Constant(0.0);
    Coefficients::new(weight, &source, eta).u_star(t, horizon - t)
}

/// Errors below this are indistinguishable from rounding.
pub const RATE_FLOOR: f64 = 1e-13;

/// Empirical orders of convergence of the penalized solution to the limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub etas: Vec<f64>,
    /// Sup-norm errors over the grid, one per `eta`.
    pub err_a: Vec<f64>,
    pub err_c: Vec<f64>,
    pub err_u: Vec<f64>,
    /// Orders between consecutive `eta`; `None` when saturated at the rounding floor.
    pub order_a: Vec<Option<f64>>,
    pub order_c: Vec<Option<f64>>,
    pub order_u: Vec<Option<f64>>,
}

impl RateReport {
    /// Orders from the smallest pair of penalties.
    pub fn final_orders(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        (
            *self.order_a.last().unwrap(),
            *self.order_c.last().unwrap(),
            *self.order_u.last().unwrap(),
        )
    }
}

fn orders(errs: &[f64], etas: &[f64]) -> Vec<Option<f64>> {
    errs.windows(2)
        .zip(etas.windows(2))
        .map(|(e, h)| {
            if e[0] < RATE_FLOOR || e[1] < RATE_FLOOR {
                None
            } else {
                Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            }
        })
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Measures `p` in `err(eta) ~ eta^p` for `A`, `C` and `u*` in the sup norm over
/// `grid ⊂ [0, T)`.
pub fn convergence_rates(weight: &Weight, source: &TimeFn, etas: &[f64], grid: &[f64]) -> Result<RateReport> {
    if etas.len() < 3 {
        return Err(Error::Argument("at least three penalty values are needed".into()));
    }
    if etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) || etas.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::Argument("penalty values must be positive and strictly decreasing".into()));
    }
    let limit = solve_limit(weight, source, grid)?;
    let mut err_a = Vec::new();
    let mut err_c = Vec::new();
    let mut err_u = Vec::new();
    for &eta in etas {
        let sol = solve(weight, source, Some(eta), grid)?;
        err_a.push(sup_diff(&sol.a_coef, &limit.a_coef));
        err_c.push(sup_diff(&sol.c_coef, &limit.c_coef));
        err_u.push(sup_diff(&sol.u_star, &limit.u_star));
    }
    Ok(RateReport {
        etas: etas.to_vec(),
        order_a: orders(&err_a, etas),
        order_c: orders(&err_c, etas),
        order_u: orders(&err_u, etas),
        err_a,
        err_c,
        err_u,
    })
}

/// Cost of migration `C_t = int_t^T a_s A_s ds` of a model on `grid ⊂ [0, T]`,
/// with the weight dual to the model's reversion rate.
pub fn cost_of_migration(model: &BridgeModel, grid: &[f64]) -> Result<Vec<f64>> {
    let weight = model.weight()?;
    if !weight.limit_admissible() {
        return Err(divergence(&weight));
    }
    check_grid(grid, model.horizon, true)?;
    let coeffs = Coefficients::new(&weight, &model.source, None);
    let horizon = model.horizon;
    let n = grid.len();
    let mut out = vec![0.0; n];
    let mut acc = coeffs.cost_between(0.0, horizon - grid[n - 1])?;
    out[n - 1] = acc;
    for k in (0..n - 1).rev() {
        acc += coeffs.cost_between(horizon - grid[k + 1], horizon - grid[k])?;
        out[k] = acc;
    }
    Ok(out)
}

/// Residual of the HJB equation for `Phi = A_{eta,t} x + C_{eta,t}`:
/// `A' x + C' + a A + x inf_v {-v A + v^{m+1} / ((m+1) w)}` with the derivatives
/// and the infimum in closed form.
pub fn hjb_residual(weight: &Weight, source: &TimeFn, eta: f64, t: f64, x: f64) -> Result<f64> {
    let horizon = weight.horizon();
    if !(eta > 0.0) {
        return Err(Error::Argument(format!("penalty eta must be positive, got {eta}")));
    }
    if !(t > 0.0 && t < horizon) || !(x >= 0.0) {
        return Err(Error::Domain(format!("HJB residual needs 0 < t < T and x >= 0; got t = {t}, x = {x}")));
    }
    let m = weight.power();
    let coeffs = Coefficients::new(weight, source, Some(eta));
    let r = horizon - t;
    let d = coeffs.denominator(r)?;
    let z = weight.ln_z_tr(t, r).exp();
    let a_coef = d.powf(-m);
    // d/dt of (eta^{1/m} + J)^{-m} with J' = -z/(m+1).
    let da = m * d.powf(-m - 1.0) * z / (m + 1.0);
    let a = source.eval(t, horizon);
    let dc = -a * a_coef;
    let infimum = hamiltonian_infimum(z, a_coef, m);
    Ok(da * x + dc + a * a_coef + x * infimum)
}

/// `inf_{v >= 0} {-v A + v^{m+1} / ((m+1) w)} = -(m/(m+1)) z A^{1 + 1/m}`.
pub fn hamiltonian_infimum(z: f64, a_coef: f64, m: f64) -> f64 {
    -(m / (m + 1.0)) * z * a_coef.powf(1.0 + 1.0 / m)
}

/// Partial limit costs `int_0^{T - delta} a_s A_s ds` for shrinking cut-offs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffStudy {
    pub cutoffs: Vec<f64>,
    pub partial: Vec<f64>,
    /// `partial[k+1] - partial[k]`, each integrated directly.
    pub increments: Vec<f64>,
    /// Local power `beta` in `increment ~ delta^beta`, from the last two increments.
    pub exponent: f64,
    pub converges: bool,
}

/// Smallest decay exponent of the increments accepted as convergence.
pub const CUTOFF_EXPONENT_MIN: f64 = 0.02;

/// Integrates the limit cost with cut-offs `T - delta` and decides numerically
/// whether `C_0` is finite: the tail beyond the cut-off behaves like
/// `delta^beta`, and the integral converges when the measured `beta` is
/// positive. Works for admissible and inadmissible weights alike.
pub fn limit_cost_cutoff_study(weight: &Weight, source: &TimeFn, cutoffs: &[f64]) -> Result<CutoffStudy> {
    if cutoffs.len() < 3 {
        return Err(Error::Argument("at least three cut-offs are needed".into()));
    }
    let horizon = weight.horizon();
    if cutoffs.windows(2).any(|p| !(p[1] < p[0])) || !(cutoffs[0] < horizon) || !(cutoffs[cutoffs.len() - 1] > 0.0) {
        return Err(Error::Argument("cut-offs must decrease strictly within (0, T)".into()));
    }
    let coeffs = Coefficients::new(weight, source, None);
    let base = coeffs.cost_between(cutoffs[0], horizon)?;
    let mut partial = vec![base];
    let mut increments = Vec::new();
    for pair in cutoffs.windows(2) {
        let inc = coeffs.cost_between_log(-pair[0].ln(), -pair[1].ln())?;
        increments.push(inc);
        partial.push(partial.last().unwrap() + inc);
    }
    let k = increments.len();
    let exponent = if k >= 2 {
        let ratio = increments[k - 1] / increments[k - 2];
        let step = cutoffs[k - 1] / cutoffs[k];
        -ratio.ln() / step.ln()
    } else {
        f64::NAN
    };
    Ok(CutoffStudy {
        cutoffs: cutoffs.to_vec(),
        partial,
        increments,
        exponent,
        converges: exponent > CUTOFF_EXPONENT_MIN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightSpec;

    fn power_weight(c: f64, m: f64) -> Weight {
        Weight::new(WeightSpec::PowerLaw { c, m }, m, 1.0).unwrap()
    }

    const ONE: TimeFn = TimeFn::Constant(1.0);

    #[test]
    fn terminal_values() {
        let w = power_weight(1.0, 1.0);
        let sol = solve_penalized(&w, &ONE, 0.5, &[0.5, 1.0]).unwrap();
        assert_eq!(sol.a_coef[1], 2.0);
        assert_eq!(sol.c_coef[1], 0.0);
    }

    #[test]
    fn penalized_power_law_closed_form() {
        // A^{-1} = eta + sqrt(1 - t) for c = m = 1.
        let w = power_weight(1.0, 1.0);
        let sol = solve_penalized(&w, &ONE, 1.0, &[0.75]).unwrap();
        assert!((sol.a_coef[0] - 2.0 / 3.0).abs() < 1e-14);
        // C = int_0^{1/4} dr / (1 + sqrt r) = 1 - 2 ln(3/2).
        let exact = 1.0 - 2.0 * 1.5f64.ln();
        assert!((sol.c_coef[0] - exact).abs() < 1e-12, "{} vs {exact}", sol.c_coef[0]);
    }

    #[test]
    fn constant_weight() {
        let w = power_weight(2.0, 1.0);
        let sol = solve_penalized(&w, &ONE, 1.0, &[0.0]).unwrap();
        assert!((sol.a_coef[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn limit_examples() {
        let w = power_weight(1.0, 1.0);
        let sol = solve_limit(&w, &ONE, &[0.0, 0.75]).unwrap();
        assert!((sol.c_coef[0] - 2.0).abs() < 1e-10, "{}", sol.c_coef[0]);
        assert!((sol.a_coef[1] - 2.0).abs() < 1e-13);
        assert!((sol.u_star[1] - 4.0).abs() < 1e-12);
        let bad = power_weight(2.5, 1.0);
        assert!(matches!(solve_limit(&bad, &ONE, &[0.0]), Err(Error::Divergence { .. })));
    }

    #[test]
    fn limit_rejects_terminal_node() {
        let w = power_weight(1.0, 1.0);
        assert!(matches!(solve_limit(&w, &ONE, &[0.5, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(solve_penalized(&w, &ONE, 0.0, &[0.5]), Err(Error::Argument(_))));
    }

    #[test]
    fn cost_of_migration_power_law() {
        let model = BridgeModel::power_law(1.0, 0.3, 1.0, 1.0, 1.0);
        let c = cost_of_migration(&model, &[0.0, 0.5, 1.0]).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-10);
        assert!((c[1] - 2.0 * 0.5f64.sqrt()).abs() < 1e-10);
        assert_eq!(c[2], 0.0);
    }

    #[test]
    fn hamiltonian_matches_numeric_minimum() {
        for &(z, a, m) in &[(1.3f64, 0.7, 1.0f64), (0.4, 2.5, 0.5), (2.0, 1.1, 2.0)] {
            let w = z.powf(m);
            let f = |v: f64| -v * a + v.powf(m + 1.0) / ((m + 1.0) * w);
            // golden section on a bracket containing the minimizer
            let (mut lo, mut hi) = (0.0, 50.0);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..200 {
                let x1 = hi - g * (hi - lo);
                let x2 = lo + g * (hi - lo);
                if f(x1) < f(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let numeric = f(0.5 * (lo + hi));
            assert!((numeric - hamiltonian_infimum(z, a, m)).abs() < 1e-10);
        }
    }

    #[test]
    fn hjb_examples() {
        let w = power_weight(1.0, 1.0);
        assert!(hjb_residual(&w, &ONE, 0.1, 0.5, 3.0).unwrap().abs() <= 1e-9);
        assert!(hjb_residual(&w, &ONE, 0.1, 0.5, 0.0).unwrap().abs() <= 1e-12);
        let flat = power_weight(2.0, 1.0);
        assert!(hjb_residual(&flat, &ONE, 1.0, 0.25, 1.0).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn duality_examples() {
        let grid: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
        let d = optimal_control_equals_h(&ReversionSpec::PowerLaw { c: 1.0 }, 1.0, 1.0, &grid).unwrap();
        assert!(d <= 1e-8, "{d}");
        let d = optimal_control_equals_h(&ReversionSpec::Application { epsilon: 0.1842 }, 1.0, 1.0, &grid).unwrap();
        assert!(d <= 1e-7, "{d}");
        let d = optimal_control_equals_h(&ReversionSpec::PowerLaw { c: 0.5 }, 1.0, 2.0, &grid).unwrap();
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn rates_need_three_decreasing_penalties() {
        let w = power_weight(1.0, 1.0);
        assert!(convergence_rates(&w, &ONE, &[1e-2, 5e-3], &[0.5]).is_err());
        assert!(convergence_rates(&w, &ONE, &[1e-2, 2e-2, 5e-3], &[0.5]).is_err());
    }

    #[test]
    fn rate_for_m_one() {
        let w = power_weight(1.0, 1.0);
        let grid: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
        let rep = convergence_rates(&w, &ONE, &[1e-2, 5e-3, 2.5e-3], &grid).unwrap();
        let (pa, _, pu) = rep.final_orders();
        assert!((0.9..=1.1).contains(&pa.unwrap()), "{rep:?}");
        assert!((0.9..=1.1).contains(&pu.unwrap()), "{rep:?}");
    }

    #[test]
    fn cutoff_study_splits_admissibility() {
        let cutoffs: Vec<f64> = (1..=12).map(|k| 10f64.powi(-k)).collect();
        let ok = limit_cost_cutoff_study(&power_weight(1.0, 1.0), &ONE, &cutoffs).unwrap();
        assert!(ok.converges);
        assert!((ok.exponent - 0.5).abs() < 1e-6);
        assert!((ok.partial.last().unwrap() - 2.0).abs() < 1e-5);
        let bad = limit_cost_cutoff_study(&power_weight(2.0, 1.0), &ONE, &cutoffs).unwrap();
        assert!(!bad.converges);
    }
}
