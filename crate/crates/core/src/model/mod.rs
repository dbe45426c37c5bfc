//! Coefficients of the bridge and of the control problem.
//!
//! The bridge is `dX = (a_t - h_t X) dt + sigma_t sqrt(h_t X) dB` on `(0, T)`
//! with `X_0 = X_T = 0`. The control objective weights migration cost by
//! `1/w_t`; the weight that makes `u* = h` optimal is obtained from `h`
//! through the duality `h_t int_t^T w^{1/m} = (m+1) w_t^{1/m}`.

mod config;
mod reversion;
mod weight;

pub use config::{ModelConfig, SourceConfig, VolConfig};
pub use reversion::{RateTable, Reversion, ReversionSpec};
pub use weight::{IntegrabilityCertificate, Weight, WeightSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-negative coefficient of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeFn {
    Constant(f64),
    /// `c0 + c1 (1 - t/T)`.
    Affine { c0: f64, c1: f64 },
}

impl TimeFn {
    pub fn eval(&self, t: f64, horizon: f64) -> f64 {
        match *self {
            TimeFn::Constant(v) => v,
            TimeFn::Affine { c0, c1 } => c0 + c1 * (1.0 - t / horizon),
        }
    }

    /// Non-negativity on `[0, T]`; affine forms are checked at both ends.
    pub fn is_non_negative(&self) -> bool {
        match *self {
            TimeFn::Constant(v) => v >= 0.0,
            TimeFn::Affine { c0, c1 } => c0 >= 0.0 && c0 + c1 >= 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            TimeFn::Constant(v) => v == 0.0,
            TimeFn::Affine { c0, c1 } => c0 == 0.0 && c1 == 0.0,
        }
    }
}

/// One bridge instance: source, squared volatility, reversion rate, power
/// of the control cost and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeModel {
    pub name: Option<String>,
    pub horizon: f64,
    pub source: TimeFn,
    pub vol_sq: TimeFn,
    pub reversion: ReversionSpec,
    pub m: f64,
}

/// Parameters of the unit-day model with affine source and squared volatility
/// and the shifted reversion rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApplicationParams {
    pub a0: f64,
    pub a1: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub epsilon: f64,
}

impl ApplicationParams {
    /// Identified parameters for the 2023 season.
    pub const IDENTIFIED_2023: Self = Self {
        a0: 3.375e-2,
        a1: 5.255e-2,
        kappa0: 1.276e-1,
        kappa1: 3.853e-1,
        epsilon: 1.842e-1,
    };

    /// Identified parameters for the 2024 season.
    pub const IDENTIFIED_2024: Self = Self {
        a0: 7.964e-2,
        a1: -2.707e-2,
        kappa0: 2.619e-1,
        kappa1: 1.152e-1,
        epsilon: 1.370e-1,
    };

    /// Sign constraints on the coefficients.
    pub fn validate(&self) -> Result<()> {
        let ok = self.a0 >= 0.0
            && self.a1 >= -self.a0
            && self.kappa0 >= 0.0
            && self.kappa1 >= -self.kappa0
            && self.epsilon > 0.0;
        let finite = [self.a0, self.a1, self.kappa0, self.kappa1, self.epsilon]
            .iter()
            .all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "parameters violate a0 >= 0, a1 >= -a0, kappa0 >= 0, kappa1 >= -kappa0, eps > 0: {self:?}"
            )))
        }
    }

    pub fn model(&self, m: f64) -> BridgeModel {
        BridgeModel {
            name: None,
            horizon: 1.0,
            source: TimeFn::Affine {
                c0: self.a0,
                c1: self.a1,
            },
            vol_sq: TimeFn::Affine {
                c0: self.kappa0,
                c1: self.kappa1,
            },
            reversion: ReversionSpec::Application {
                epsilon: self.epsilon,
            },
            m,
        }
    }
}

impl BridgeModel {
    /// Constant source and volatility with a power-law reversion rate.
    pub fn power_law(a: f64, sigma: f64, c: f64, horizon: f64, m: f64) -> Self {
        Self {
            name: None,
            horizon,
            source: TimeFn::Constant(a),
            vol_sq: TimeFn::Constant(sigma * sigma),
            reversion: ReversionSpec::PowerLaw { c },
            m,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Argument(format!("T must be positive, got {}", self.horizon)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Argument(format!("m must be positive, got {}", self.m)));
        }
        if !self.source.is_non_negative() {
            return Err(Error::Argument(format!("source must be non-negative on [0, T]: {:?}", self.source)));
        }
        if !self.vol_sq.is_non_negative() {
            return Err(Error::Argument(format!(
                "squared volatility must be non-negative on [0, T]: {:?}",
                self.vol_sq
            )));
        }
        Reversion::new(self.reversion.clone(), self.horizon)?;
        Ok(())
    }

    pub fn source_at(&self, t: f64) -> f64 {
        self.source.eval(t, self.horizon)
    }

    pub fn vol_sq_at(&self, t: f64) -> f64 {
        self.vol_sq.eval(t, self.horizon)
    }

    pub fn reversion(&self) -> Result<Reversion> {
        Reversion::new(self.reversion.clone(), self.horizon)
    }

    /// The weight dual to this model's reversion rate.
    pub fn weight(&self) -> Result<Weight> {
        Weight::dual_to(&self.reversion()?, self.m)
    }

    /// Coefficients of the unit-day application model, when the model has that form.
    pub fn application_params(&self) -> Option<ApplicationParams> {
        if (self.horizon - 1.0).abs() > 1e-12 {
            return None;
        }
        let epsilon = match self.reversion {
            ReversionSpec::Application { epsilon } => epsilon,
            _ => return None,
        };
        let (a0, a1) = match self.source {
            TimeFn::Constant(a) => (a, 0.0),
            TimeFn::Affine { c0, c1 } => (c0, c1),
        };
        let (kappa0, kappa1) = match self.vol_sq {
            TimeFn::Constant(s) => (s, 0.0),
            TimeFn::Affine { c0, c1 } => (c0, c1),
        };
        Some(ApplicationParams {
            a0,
            a1,
            kappa0,
            kappa1,
            epsilon,
        })
    }
}

/// `h_t` of a reversion family on horizon `T`.
pub fn eval_reversion(spec: &ReversionSpec, horizon: f64, t: f64) -> Result<f64> {
    Reversion::new(spec.clone(), horizon)?.rate(t)
}

/// `w_t = (h_t/h_0)^m exp(-(m/(m+1)) int_0^t h_s ds)`; exactly 1 at `t = 0`.
pub fn weight_from_reversion(spec: &ReversionSpec, horizon: f64, m: f64, t: f64) -> Result<f64> {
    let reversion = Reversion::new(spec.clone(), horizon)?;
    if reversion.rate(0.0)? <= 0.0 {
        return Err(Error::Domain("h_0 must be positive".into()));
    }
    Weight::dual_to(&reversion, m)?.w(t)
}

/// `h_t int_t^T w^{1/m} ds - (m+1) w_t^{1/m}` with the integral computed by
/// quadrature; analytically zero.
pub fn duality_residual(spec: &ReversionSpec, horizon: f64, m: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < horizon) {
        return Err(Error::Domain(format!("duality residual needs 0 < t < T, got {t}")));
    }
    let reversion = Reversion::new(spec.clone(), horizon)?;
    let weight = Weight::dual_to(&reversion, m)?;
    let integral = weight.integral_to_end_quadrature(t)?;
    Ok(reversion.rate(t)? * integral - (m + 1.0) * weight.z(t)?)
}

/// Outcome of a Feller-type regime check on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FellerReport {
    /// `a_t <= (sigma_t^2 / 2) h_t` holds at every node (high-volatility regime).
    pub high_volatility: bool,
    pub first_violation: Option<f64>,
}

/// Checks `a_t <= (sigma_t^2/2) h_t` at every grid node.
pub fn feller_check(model: &BridgeModel, grid: &[f64]) -> Result<FellerReport> {
    if grid.is_empty() {
        return Err(Error::Argument("Feller check needs a non-empty grid".into()));
    }
    let reversion = model.reversion()?;
    for &t in grid {
        let h = reversion.rate(t)?;
        if model.source_at(t) > 0.5 * model.vol_sq_at(t) * h {
            return Ok(FellerReport {
                high_volatility: false,
                first_violation: Some(t),
            });
        }
    }
    Ok(FellerReport {
        high_volatility: true,
        first_violation: None,
    })
}

/// Shape of the power-law weight near the terminal time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `c > m + 1`: the weight vanishes at `T`.
    Decreasing,
    /// `c = m + 1`: constant weight.
    Constant,
    /// `c < m + 1`: the weight blows up at `T`.
    Increasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// `c < 1 + 1/m`, i.e. the limit cost `C_0` is finite.
    pub admissible: bool,
}

pub fn classify_regime(c: f64, m: f64) -> RegimeClass {
    let pivot = m + 1.0;
    let regime = if (c - pivot).abs() <= 1e-12 * pivot {
        Regime::Constant
    } else if c > pivot {
        Regime::Decreasing
    } else {
        Regime::Increasing
    };
    RegimeClass {
        regime,
        admissible: c < 1.0 + 1.0 / m,
    }
}

/// `n` uniform nodes `k T / n`, `k = 0..n`, covering `[0, T)`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| horizon * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_reversion_examples() {
        let p = ReversionSpec::PowerLaw { c: 0.5 };
        assert_eq!(eval_reversion(&p, 1.0, 0.0).unwrap(), 0.5);
        let p = ReversionSpec::PowerLaw { c: 1.0 };
        assert!((eval_reversion(&p, 1.0, 0.75).unwrap() - 4.0).abs() < 1e-14);
        assert!(eval_reversion(&p, 1.0, 1.0).is_err());
    }

    #[test]
    fn weight_from_reversion_examples() {
        let p = ReversionSpec::PowerLaw { c: 1.0 };
        assert_eq!(weight_from_reversion(&p, 1.0, 1.0, 0.0).unwrap(), 1.0);
        assert!((weight_from_reversion(&p, 1.0, 1.0, 0.75).unwrap() - 2.0).abs() < 1e-13);
        assert!(weight_from_reversion(&p, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn duality_residual_examples() {
        let r = duality_residual(&ReversionSpec::PowerLaw { c: 1.0 }, 1.0, 1.0, 0.5).unwrap();
        assert!(r.abs() <= 1e-10, "{r}");
        let r = duality_residual(&ReversionSpec::PowerLaw { c: 0.5 }, 1.0, 2.0, 0.25).unwrap();
        assert!(r.abs() <= 1e-8, "{r}");
        let r = duality_residual(&ReversionSpec::Application { epsilon: 0.2 }, 1.0, 1.0, 0.9).unwrap();
        assert!(r.abs() <= 1e-8, "{r}");
        assert!(duality_residual(&ReversionSpec::PowerLaw { c: 1.0 }, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn feller_examples() {
        let grid = uniform_grid(1.0, 1000);
        for p in [ApplicationParams::IDENTIFIED_2023, ApplicationParams::IDENTIFIED_2024] {
            assert!(feller_check(&p.model(1.0), &grid).unwrap().high_volatility);
        }
        let zero_source = BridgeModel::power_law(0.0, 0.3, 0.5, 1.0, 1.0);
        assert!(feller_check(&zero_source, &grid).unwrap().high_volatility);

        let low = BridgeModel::power_law(1.0, 0.1, 0.5, 1.0, 1.0);
        let report = feller_check(&low, &[0.0]).unwrap();
        assert!(!report.high_volatility);
        assert_eq!(report.first_violation, Some(0.0));

        assert!(matches!(feller_check(&low, &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn regime_examples() {
        assert_eq!(
            classify_regime(1.0, 1.0),
            RegimeClass {
                regime: Regime::Increasing,
                admissible: true
            }
        );
        assert_eq!(
            classify_regime(1.5, 0.5),
            RegimeClass {
                regime: Regime::Constant,
                admissible: true
            }
        );
        assert_eq!(
            classify_regime(2.5, 1.0),
            RegimeClass {
                regime: Regime::Decreasing,
                admissible: false
            }
        );
        assert!(!classify_regime(2.0, 1.0).admissible);
    }

    #[test]
    fn application_params_validation() {
        ApplicationParams::IDENTIFIED_2023.validate().unwrap();
        ApplicationParams::IDENTIFIED_2024.validate().unwrap();
        let mut bad = ApplicationParams::IDENTIFIED_2024;
        bad.a1 = -0.1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model_validation() {
        ApplicationParams::IDENTIFIED_2023.model(1.0).validate().unwrap();
        let mut m = BridgeModel::power_law(1.0, 0.5, 0.5, 1.0, 1.0);
        m.source = TimeFn::Affine { c0: 0.1, c1: -0.2 };
        assert!(m.validate().is_err());
        let mut m = BridgeModel::power_law(1.0, 0.5, 0.5, 1.0, 1.0);
        m.m = 0.0;
        assert!(m.validate().is_err());
    }
}
