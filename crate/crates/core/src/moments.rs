//! Mean and variance of the bridge.
//!
//! For the unit-day model (affine source and squared volatility, shifted
//! reversion rate) both moments are available in closed form. For any model
//! they also solve the linear system
//!
//! ```text
//! E' = a_t - h_t E,          E(0) = 0,
//! V' = -2 h_t V + sigma_t^2 h_t E,   V(0) = 0,
//! ```
//!
//! which is integrated here with the two-stage Gauss–Legendre collocation
//! method (order 4, A-stable) on steps graded towards the terminal time.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ApplicationParams, BridgeModel};

/// Where a moment series came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    OdeOracle,
    MonteCarlo { n_paths: usize, seed: u64 },
}

/// Mean and variance of `X_t` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub provenance: Provenance,
}

impl MomentSeries {
    pub fn sd(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

fn check_unit_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("moments are defined on [0, 1]; got t = {t}")));
    }
    Ok(())
}

/// `ln(1/(1-t))` without cancellation for small `t`.
fn log_inv(t: f64) -> f64 {
    -(-t).ln_1p()
}

/// Closed-form mean of the unit-day model.
pub fn mean_closed(p: &ApplicationParams, t: f64) -> Result<f64> {
    check_unit_time(t)?;
    if t == 0.0 || t == 1.0 {
        return Ok(0.0);
    }
    let eps = p.epsilon;
    let l = log_inv(t);
    let f = (1.0 - t) / (eps + t);
    Ok(p.a0 * f * ((1.0 + eps) * l - t) + p.a1 * f * (0.5 * t * t + eps * t))
}

/// Closed-form variance of the unit-day model.
pub fn var_closed(p: &ApplicationParams, t: f64) -> Result<f64> {
    check_unit_time(t)?;
    if t == 0.0 || t == 1.0 {
        return Ok(0.0);
    }
    let eps = p.epsilon;
    let l = log_inv(t);
    let g = (1.0 + eps) * ((1.0 - t) / (eps + t)).powi(2);
    let k0a0 = (1.0 / (1.0 - t)) * ((2.0 + eps - t) * l - (2.0 + eps) * t);
    let k0a1 = 0.5 * (t - 2.0 * (1.0 + eps) * l + (1.0 + 2.0 * eps) * t / (1.0 - t));
    let k1a0 = 0.5 * (1.0 + eps) * l * l + t - l;
    let k1a1 = 0.5
        * (0.5 * (1.0 - t) * (t + 3.0 + 4.0 * eps) + (2.0 * eps + 1.0) * l - 0.5 * (3.0 + 4.0 * eps));
    Ok(g * (p.kappa0 * p.a0 * k0a0
        + p.kappa0 * p.a1 * k0a1
        + p.kappa1 * p.a0 * k1a0
        + p.kappa1 * p.a1 * k1a1))
}

/// Both closed forms on a grid of `[0, 1]`.
pub fn closed_series(p: &ApplicationParams, grid: &[f64]) -> Result<MomentSeries> {
    let mut mean = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    for &t in grid {
        mean.push(mean_closed(p, t)?);
        variance.push(var_closed(p, t)?);
    }
    Ok(MomentSeries {
        grid: grid.to_vec(),
        mean,
        variance,
        provenance: Provenance::ClosedForm,
    })
}

/// Relative distance to `T` at which ODE integration stops; beyond it the
/// moments are replaced by their limit 0.
pub const ODE_STOP: f64 = 1e-8;

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6

/// Integrates the moment system of `model` and reports it on `grid ⊂ [0, T]`.
pub fn moment_ode(model: &BridgeModel, grid: &[f64]) -> Result<MomentSeries> {
    model.validate()?;
    let horizon = model.horizon;
    if grid.is_empty() {
        return Err(Error::Argument("time grid is empty".into()));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::Argument("time grid must be strictly increasing".into()));
    }
    if !(grid[0] >= 0.0 && grid[grid.len() - 1] <= horizon) {
        return Err(Error::Domain(format!("time grid must lie in [0, {horizon}]")));
    }
    let reversion = model.reversion()?;
    let stop = horizon * (1.0 - ODE_STOP);
    let max_step = 1e-3 * horizon;

    // Coefficients at time t: h, a, sigma^2 h.
    let coef = |t: f64| -> (f64, f64, f64) {
        let h = reversion.ln_rate_tr(t, horizon - t).exp();
        (h, model.source_at(t), model.vol_sq_at(t) * h)
    };

    let mut mean = Vec::with_capacity(grid.len());
    let mut variance = Vec::with_capacity(grid.len());
    let (mut t, mut e, mut v) = (0.0f64, 0.0f64, 0.0f64);
    for &target in grid {
        if target >= stop {
            mean.push(0.0);
            variance.push(0.0);
            continue;
        }
        while t < target {
            let graded = (0.01 * (horizon - t)).min(max_step);
            let dt = graded.min(target - t);
            let end = if target - t - dt <= 1e-14 * horizon { target } else { t + dt };
            let dt = end - t;
            let t1 = t + (0.5 - SQRT3_6) * dt;
            let t2 = t + (0.5 + SQRT3_6) * dt;
            let (h1, a1, s1) = coef(t1);
            let (h2, a2, s2) = coef(t2);
            // Stage derivatives K = (kE1, kV1, kE2, kV2) of the collocation system
            // K_i = M_i (y + dt sum_j a_ij K_j) + b_i.
            let a11 = 0.25;
            let a12 = 0.25 - SQRT3_6;
            let a21 = 0.25 + SQRT3_6;
            let a22 = 0.25;
            // M_i = [[-h, 0], [s, -2h]], b_i = [a, 0].
            let mut lhs = Matrix4::<f64>::identity();
            let mut rhs = Vector4::<f64>::zeros();
            let rows = [(0usize, h1, s1, a1, a11, a12), (2usize, h2, s2, a2, a21, a22)];
            for &(row, h, s, a, ai1, ai2) in &rows {
                // E-equation: kE_i = -h (e + dt (ai1 kE1 + ai2 kE2)) + a
                lhs[(row, 0)] += h * dt * ai1;
                lhs[(row, 2)] += h * dt * ai2;
                rhs[row] = -h * e + a;
                // V-equation: kV_i = s (e + dt(..kE..)) - 2h (v + dt(..kV..))
                lhs[(row + 1, 0)] -= s * dt * ai1;
                lhs[(row + 1, 2)] -= s * dt * ai2;
                lhs[(row + 1, 1)] += 2.0 * h * dt * ai1;
                lhs[(row + 1, 3)] += 2.0 * h * dt * ai2;
                rhs[row + 1] = s * e - 2.0 * h * v;
            }
            let k = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical(format!("singular collocation system at t = {t}")))?;
            e += 0.5 * dt * (k[0] + k[2]);
            v += 0.5 * dt * (k[1] + k[3]);
            if !(e.is_finite() && v.is_finite()) {
                return Err(Error::Numerical(format!("moment ODE became non-finite at t = {t}")));
            }
            t = end;
        }
        mean.push(e);
        variance.push(v);
    }
    Ok(MomentSeries {
        grid: grid.to_vec(),
        mean,
        variance,
        provenance: Provenance::OdeOracle,
    })
}

/// Mean of `X_t` from the moment ODE.
pub fn mean_ode(model: &BridgeModel, grid: &[f64]) -> Result<Vec<f64>> {
    Ok(moment_ode(model, grid)?.mean)
}

/// Variance of `X_t` from the moment ODE.
pub fn var_ode(model: &BridgeModel, grid: &[f64]) -> Result<Vec<f64>> {
    Ok(moment_ode(model, grid)?.variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P23: ApplicationParams = ApplicationParams::IDENTIFIED_2023;
    const P24: ApplicationParams = ApplicationParams::IDENTIFIED_2024;

    #[test]
    fn closed_forms_vanish_at_ends() {
        for p in [P23, P24] {
            assert_eq!(mean_closed(&p, 0.0).unwrap(), 0.0);
            assert_eq!(var_closed(&p, 0.0).unwrap(), 0.0);
            assert_eq!(mean_closed(&p, 1.0).unwrap(), 0.0);
            assert!(mean_closed(&p, 1.0 - 1e-12).unwrap().abs() < 1e-9);
            assert!(var_closed(&p, 1.0 - 1e-12).unwrap().abs() < 1e-9);
        }
        assert!(mean_closed(&P23, 1.5).is_err());
    }

    #[test]
    fn no_noise_no_variance() {
        let p = ApplicationParams {
            kappa0: 0.0,
            kappa1: 0.0,
            ..P23
        };
        for k in 1..100 {
            assert_eq!(var_closed(&p, k as f64 / 100.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn power_law_mean_ode() {
        let model = BridgeModel::power_law(1.0, 0.0, 0.5, 1.0, 1.0);
        let e = mean_ode(&model, &[0.75]).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-10, "{}", e[0]);
        let zero = BridgeModel::power_law(0.0, 0.5, 0.5, 1.0, 1.0);
        let s = moment_ode(&zero, &[0.25, 0.5, 0.99]).unwrap();
        assert!(s.mean.iter().chain(&s.variance).all(|&x| x == 0.0));
    }

    #[test]
    fn ode_matches_closed_form_at_midday() {
        let grid = [0.5];
        let e = mean_ode(&P23.model(1.0), &grid).unwrap()[0];
        let c = mean_closed(&P23, 0.5).unwrap();
        assert!(((e - c) / c).abs() < 1e-6, "{e} vs {c}");
        let v = var_ode(&P24.model(1.0), &grid).unwrap()[0];
        let c = var_closed(&P24, 0.5).unwrap();
        assert!(((v - c) / c).abs() < 1e-6, "{v} vs {c}");
    }

    #[test]
    fn grid_reaching_terminal_time() {
        let s = moment_ode(&P23.model(1.0), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(s.mean[0], 0.0);
        assert_eq!(s.mean[2], 0.0);
        assert_eq!(s.variance[2], 0.0);
    }
}
