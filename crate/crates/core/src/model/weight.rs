//! The objective weight `w_t` and its power `z_t = w_t^{1/m}`.
//!
//! All integrals of `z` run up to the terminal time where `z` behaves like
//! `(T - s)^{c/(m+1) - 1}`. The substitution `T - s = tau^p` with
//! `p = (m+1)/c` turns that algebraic endpoint behaviour into a bounded,
//! smooth integrand which the adaptive Gauss–Kronrod rule handles to
//! near machine precision.

use serde::{Deserialize, Serialize};

use super::reversion::{Reversion, ReversionSpec};
use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};

/// Family of the objective weight coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightSpec {
    /// Weight dual to a reversion rate: `w_t = (h_t/h_0)^m exp(-(m/(m+1)) int_0^t h)`.
    FromReversion { reversion: ReversionSpec },
    /// `w_t = (1 - t/T)^{(m/(m+1))(c - (m+1))}`.
    PowerLaw { c: f64, m: f64 },
    /// `w_t = (eps/(eps+t))^{m(m+2)/(m+1)} (1-t)^{-m^2/(m+1)}` on the unit day.
    ApplicationForm { epsilon: f64, m: f64 },
}

/// Declared integrability certificate `w_t^{1/m} <= bound (T-t)^{-alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityCertificate {
    pub bound: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    Dual(Reversion),
    PowerLaw { c: f64 },
    Application { eps: f64 },
}

/// A weight bound to a power `m` and horizon `T`.
#[derive(Debug, Clone)]
pub struct Weight {
    spec: WeightSpec,
    m: f64,
    horizon: f64,
    kind: Kind,
}

fn check_power(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("power m must be positive, got {m}")))
    }
}

fn same_power(declared: f64, m: f64) -> Result<()> {
    if (declared - m).abs() <= 1e-12 * m.abs().max(1.0) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "weight was declared for m = {declared} but is used with m = {m}"
        )))
    }
}

impl Weight {
    pub fn new(spec: WeightSpec, m: f64, horizon: f64) -> Result<Self> {
        check_power(m)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!("horizon T must be positive, got {horizon}")));
        }
        let kind = match &spec {
            WeightSpec::FromReversion { reversion } => {
                Kind::Dual(Reversion::new(reversion.clone(), horizon)?)
            }
            WeightSpec::PowerLaw { c, m: declared } => {
                same_power(*declared, m)?;
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::Argument(format!("power-law coefficient c must be positive, got {c}")));
                }
                Kind::PowerLaw { c: *c }
            }
            WeightSpec::ApplicationForm { epsilon, m: declared } => {
                same_power(*declared, m)?;
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(Error::Argument(format!("epsilon must be positive, got {epsilon}")));
                }
                if (horizon - 1.0).abs() > 1e-12 {
                    return Err(Error::Argument("the shifted weight family requires T = 1".into()));
                }
                Kind::Application { eps: *epsilon }
            }
        };
        Ok(Self {
            spec,
            m,
            horizon,
            kind,
        })
    }

    /// The weight dual to `reversion`.
    pub fn dual_to(reversion: &Reversion, m: f64) -> Result<Self> {
        check_power(m)?;
        Ok(Self {
            spec: WeightSpec::FromReversion {
                reversion: reversion.spec().clone(),
            },
            m,
            horizon: reversion.horizon(),
            kind: Kind::Dual(reversion.clone()),
        })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn power(&self) -> f64 {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The reversion rate this weight is dual to, if it was built from one.
    pub fn reversion(&self) -> Option<&Reversion> {
        match &self.kind {
            Kind::Dual(r) => Some(r),
            _ => None,
        }
    }

    /// Coefficient `c` of the terminal behaviour `z ~ (T-t)^{c/(m+1) - 1}`.
    pub fn tail_coefficient(&self) -> f64 {
        match &self.kind {
            Kind::Dual(r) => r.tail_coefficient(),
            Kind::PowerLaw { c } => *c,
            Kind::Application { .. } => 1.0,
        }
    }

    /// Whether the limit value function stays finite, `c < 1 + 1/m`.
    pub fn limit_admissible(&self) -> bool {
        self.tail_coefficient() < 1.0 + 1.0 / self.m
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(Error::Domain(format!(
                "weight is defined on [0, T) = [0, {}); got t = {t}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `ln z` at time `t` with remaining time `r = T - t`.
    pub(crate) fn ln_z_tr(&self, t: f64, r: f64) -> f64 {
        let m = self.m;
        match &self.kind {
            Kind::Dual(rev) => {
                let h0 = rev.ln_rate_tr(0.0, self.horizon);
                rev.ln_rate_tr(t, r) - h0 - rev.cumulative_tr(t, r) / (m + 1.0)
            }
            Kind::PowerLaw { c } => (c / (m + 1.0) - 1.0) * (r / self.horizon).ln(),
            Kind::Application { eps } => {
                -(m + 2.0) / (m + 1.0) * ((eps + t) / eps).ln() - m / (m + 1.0) * r.ln()
            }
        }
    }

    /// `z_t = w_t^{1/m}`.
    pub fn z(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.ln_z_tr(t, self.horizon - t).exp())
    }

    /// `w_t`.
    pub fn w(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok((self.m * self.ln_z_tr(t, self.horizon - t)).exp())
    }

    /// `int_t^T z_s ds`; closed form for the power-law family, quadrature otherwise.
    pub fn integral_to_end(&self, t: f64) -> Result<f64> {
        match &self.kind {
            Kind::PowerLaw { c } => {
                if !(t >= 0.0 && t <= self.horizon) {
                    return Err(Error::Domain(format!("t = {t} outside [0, T]")));
                }
                let r = (self.horizon - t) / self.horizon;
                Ok((self.m + 1.0) / c * self.horizon * r.powf(c / (self.m + 1.0)))
            }
            _ => self.integral_to_end_quadrature(t),
        }
    }

    /// `int_t^T z_s ds` by substituted adaptive quadrature, for every family.
    pub fn integral_to_end_quadrature(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::Domain(format!("t = {t} outside [0, T]")));
        }
        self.integral_between_remaining(0.0, self.horizon - t)
    }

    /// `int z ds` over the last `r` units of time, `int_{T-r}^T z_s ds`.
    pub(crate) fn integral_remaining(&self, r: f64) -> Result<f64> {
        match &self.kind {
            Kind::PowerLaw { c } => {
                let rel = r / self.horizon;
                Ok((self.m + 1.0) / c * self.horizon * rel.powf(c / (self.m + 1.0)))
            }
            _ => self.integral_between_remaining(0.0, r),
        }
    }

    /// Limit of `z_t` as `t -> T` (0, a finite constant, or infinity).
    pub fn terminal_z(&self) -> f64 {
        let exponent = self.tail_coefficient() / (self.m + 1.0) - 1.0;
        if exponent > 1e-12 {
            0.0
        } else if exponent < -1e-12 {
            f64::INFINITY
        } else {
            let r = 1e-12 * self.horizon;
            self.ln_z_tr(self.horizon - r, r).exp()
        }
    }

    /// `int z ds` over times with remaining time in `[r_lo, r_hi]`.
    pub(crate) fn integral_between_remaining(&self, r_lo: f64, r_hi: f64) -> Result<f64> {
        if r_hi <= r_lo {
            return Ok(0.0);
        }
        let p = (self.m + 1.0) / self.tail_coefficient();
        let horizon = self.horizon;
        let integrand = |tau: f64| {
            let ln_tau = tau.ln();
            let r = (p * ln_tau).exp();
            p * (self.ln_z_tr(horizon - r, r) + (p - 1.0) * ln_tau).exp()
        };
        let tau_lo = r_lo.powf(1.0 / p);
        let tau_hi = r_hi.powf(1.0 / p);
        let mut cuts = vec![tau_lo];
        if let Kind::Dual(rev) = &self.kind {
            for &k in rev.knots() {
                let tau = (horizon - k).powf(1.0 / p);
                if tau > tau_lo && tau < tau_hi {
                    cuts.push(tau);
                }
            }
        }
        cuts.push(tau_hi);
        cuts.sort_by(|a, b| a.total_cmp(b));
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            max_intervals: 4000,
        };
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += quad::integrate(integrand, w[0], w[1], opts)?.value;
        }
        Ok(total)
    }

    /// Checks the declared bound `z_t <= bound (T-t)^{-alpha}` on a uniform
    /// 1000-node grid of `[0, T)`.
    pub fn check_certificate(&self, cert: IntegrabilityCertificate) -> Result<()> {
        if !(cert.alpha > 0.0 && cert.alpha < 1.0) || !(cert.bound > 0.0) {
            return Err(Error::Argument(format!(
                "certificate needs bound > 0 and alpha in (0, 1); got {cert:?}"
            )));
        }
        let n = 1000;
        for k in 0..n {
            let t = self.horizon * k as f64 / n as f64;
            let z = self.z(t)?;
            let limit = cert.bound * (self.horizon - t).powf(-cert.alpha);
            if z > limit * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "integrability certificate fails at t = {t}: w^(1/m) = {z} > {limit}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_weight(c: f64, m: f64) -> Weight {
        Weight::new(WeightSpec::PowerLaw { c, m }, m, 1.0).unwrap()
    }

    fn dual(spec: ReversionSpec, m: f64) -> Weight {
        Weight::new(WeightSpec::FromReversion { reversion: spec }, m, 1.0).unwrap()
    }

    #[test]
    fn weight_starts_at_one() {
        for w in [
            dual(ReversionSpec::PowerLaw { c: 0.5 }, 2.0),
            dual(ReversionSpec::Application { epsilon: 0.1842 }, 1.0),
            power_weight(1.3, 0.5),
            Weight::new(WeightSpec::ApplicationForm { epsilon: 0.2, m: 1.5 }, 1.5, 1.0).unwrap(),
        ] {
            assert_eq!(w.w(0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn dual_power_law_matches_closed_form() {
        // c = 1, m = 1: exponent (1/2)(1 - 2) = -1/2, so w(0.75) = 0.25^{-1/2} = 2
        let w = dual(ReversionSpec::PowerLaw { c: 1.0 }, 1.0);
        assert!((w.w(0.75).unwrap() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn dual_application_matches_closed_form() {
        let w = dual(ReversionSpec::Application { epsilon: 0.5 }, 1.0);
        let expected = (0.5f64 / 1.0).powf(1.5) * 0.5f64.powf(-0.5);
        assert!((w.w(0.5).unwrap() / expected - 1.0).abs() < 1e-13);
    }

    #[test]
    fn power_law_integral_closed_form_vs_quadrature() {
        for &(c, m) in &[(1.0, 1.0), (0.5, 2.0), (1.4, 0.5), (3.0, 1.0)] {
            let w = power_weight(c, m);
            for &t in &[0.0, 0.3, 0.75, 0.999999] {
                let a = w.integral_to_end(t).unwrap();
                let b = w.integral_to_end_quadrature(t).unwrap();
                assert!((a / b - 1.0).abs() < 1e-12, "c={c} m={m} t={t}: {a} vs {b}");
            }
        }
        // int_t^1 (1-s)^{-1/2} ds = 2 sqrt(1-t)
        let w = power_weight(1.0, 1.0);
        assert!((w.integral_to_end(0.75).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_power_is_rejected() {
        let r = Weight::new(WeightSpec::PowerLaw { c: 1.0, m: 2.0 }, 1.0, 1.0);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn certificate_check() {
        // z = (1-t)^{-1/2} for c = 1, m = 1
        let w = power_weight(1.0, 1.0);
        w.check_certificate(IntegrabilityCertificate { bound: 1.0, alpha: 0.5 }).unwrap();
        assert!(w
            .check_certificate(IntegrabilityCertificate { bound: 1.0, alpha: 0.4 })
            .is_err());
        assert!(w
            .check_certificate(IntegrabilityCertificate { bound: 1.0, alpha: 1.0 })
            .is_err());
    }

    #[test]
    fn spec_serializes_with_type_tag() {
        let spec = WeightSpec::ApplicationForm { epsilon: 0.1, m: 1.0 };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"type\":\"application_form\""));
    }
}
