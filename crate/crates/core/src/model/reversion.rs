//! Reversion-rate families `h_t`.
//!
//! Every family blows up like `c / (T - t)` at the terminal time. Internally
//! the rate is evaluated from the pair `(t, r)` with `r = T - t` supplied by
//! the caller, so that quantities near the singular endpoint keep full
//! relative precision when `r` is known more accurately than `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node samples of a tabulated reversion rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
}

/// Parametric family of the reversion rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReversionSpec {
    /// `h_t = c / (T - t)`.
    PowerLaw { c: f64 },
    /// `h_t = 1/(eps + t) + 1/(1 - t)`, defined for `T = 1` only.
    Application { epsilon: f64 },
    /// Log-linear interpolation of positive node values. `c` and `c_prime`
    /// are the declared growth bounds `c/(T-t) <= h_t <= c/(T-t) + c'`.
    Tabulated {
        table: RateTable,
        c: f64,
        c_prime: f64,
    },
}

#[derive(Debug, Clone)]
enum Kind {
    PowerLaw {
        c: f64,
    },
    Application {
        eps: f64,
    },
    Tabulated {
        t: Vec<f64>,
        ln_h: Vec<f64>,
        slope: Vec<f64>,
        cumulative: Vec<f64>,
        c: f64,
        c_prime: f64,
        tail_offset: f64,
    },
}

/// A validated reversion rate bound to a horizon `T`.
#[derive(Debug, Clone)]
pub struct Reversion {
    spec: ReversionSpec,
    horizon: f64,
    kind: Kind,
}

const BOUND_SLACK: f64 = 1e-12;

impl Reversion {
    pub fn new(spec: ReversionSpec, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!("horizon T must be positive, got {horizon}")));
        }
        let kind = match &spec {
            ReversionSpec::PowerLaw { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::Argument(format!("power-law coefficient c must be positive, got {c}")));
                }
                Kind::PowerLaw { c: *c }
            }
            ReversionSpec::Application { epsilon } => {
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(Error::Argument(format!("epsilon must be positive, got {epsilon}")));
                }
                if (horizon - 1.0).abs() > 1e-12 {
                    return Err(Error::Argument(format!(
                        "the shifted reversion family is defined on the unit day only (T = 1), got T = {horizon}"
                    )));
                }
                Kind::Application { eps: *epsilon }
            }
            ReversionSpec::Tabulated { table, c, c_prime } => {
                tabulated_kind(table, *c, *c_prime, horizon)?
            }
        };
        Ok(Self {
            spec,
            horizon,
            kind,
        })
    }

    pub fn spec(&self) -> &ReversionSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Blow-up coefficient `c` of the terminal singularity `h ~ c / (T - t)`.
    pub fn tail_coefficient(&self) -> f64 {
        match &self.kind {
            Kind::PowerLaw { c } => *c,
            Kind::Application { .. } => 1.0,
            Kind::Tabulated { c, .. } => *c,
        }
    }

    /// Growth bounds `(c, c')` with `c/(T-t) <= h_t <= c/(T-t) + c'`.
    pub fn growth_bounds(&self) -> (f64, f64) {
        match &self.kind {
            Kind::PowerLaw { c } => (*c, 0.0),
            Kind::Application { eps } => (1.0, 1.0 / eps),
            Kind::Tabulated { c, c_prime, .. } => (*c, *c_prime),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be non-negative, got {t}")));
        }
        if t >= self.horizon {
            return Err(Error::Domain(format!(
                "reversion rate blows up at T = {}; requested t = {t}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `h_t` for `0 <= t < T`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.ln_rate_tr(t, self.horizon - t).exp())
    }

    /// `ln h_t` given `t` and the remaining time `r = T - t`.
    pub(crate) fn ln_rate_tr(&self, t: f64, r: f64) -> f64 {
        match &self.kind {
            Kind::PowerLaw { c } => c.ln() - r.ln(),
            Kind::Application { eps } => (1.0 + eps).ln() - (eps + t).ln() - r.ln(),
            Kind::Tabulated {
                t: nodes,
                ln_h,
                slope,
                c,
                tail_offset,
                ..
            } => {
                let last = nodes.len() - 1;
                if t >= nodes[last] {
                    (c / r + tail_offset).ln()
                } else {
                    let i = segment(nodes, t);
                    ln_h[i] + slope[i] * (t - nodes[i])
                }
            }
        }
    }

    /// `int_0^t h_s ds` given `t` and `r = T - t`.
    pub(crate) fn cumulative_tr(&self, t: f64, r: f64) -> f64 {
        match &self.kind {
            Kind::PowerLaw { c } => c * (self.horizon.ln() - r.ln()),
            Kind::Application { eps } => ((eps + t) / eps).ln() - r.ln(),
            Kind::Tabulated {
                t: nodes,
                ln_h,
                slope,
                cumulative,
                c,
                tail_offset,
                ..
            } => {
                let last = nodes.len() - 1;
                if t >= nodes[last] {
                    let r_last = self.horizon - nodes[last];
                    cumulative[last] + c * (r_last.ln() - r.ln()) + tail_offset * (t - nodes[last])
                } else {
                    let i = segment(nodes, t);
                    cumulative[i] + log_linear_integral(ln_h[i], slope[i], t - nodes[i])
                }
            }
        }
    }

    /// `int_0^t h_s ds` for `0 <= t < T`.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.cumulative_tr(t, self.horizon - t))
    }

    /// Knots of the rate (interior points where it is only piecewise smooth).
    pub(crate) fn knots(&self) -> &[f64] {
        match &self.kind {
            Kind::Tabulated { t, .. } => t,
            _ => &[],
        }
    }
}

fn segment(nodes: &[f64], t: f64) -> usize {
    // nodes[0] = 0 <= t < nodes[last]
    match nodes.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => i.min(nodes.len() - 2),
        Err(i) => i.saturating_sub(1).min(nodes.len() - 2),
    }
}

/// `int_0^dt exp(ln_h0 + slope * s) ds`.
fn log_linear_integral(ln_h0: f64, slope: f64, dt: f64) -> f64 {
    let h0 = ln_h0.exp();
    if (slope * dt).abs() < 1e-300 {
        h0 * dt
    } else {
        h0 * (slope * dt).exp_m1() / slope
    }
}

fn tabulated_kind(table: &RateTable, c: f64, c_prime: f64, horizon: f64) -> Result<Kind> {
    let RateTable { t, h } = table;
    if t.len() != h.len() {
        return Err(Error::Argument("rate table columns differ in length".into()));
    }
    if t.len() < 2 {
        return Err(Error::Argument("rate table needs at least two nodes".into()));
    }
    if t[0] != 0.0 {
        return Err(Error::Argument(format!("rate table must start at t = 0, got {}", t[0])));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("rate table times must be strictly increasing".into()));
    }
    if !(t[t.len() - 1] < horizon) {
        return Err(Error::Argument("rate table must stay strictly before T".into()));
    }
    if !(c > 0.0 && c.is_finite()) || !(c_prime >= 0.0 && c_prime.is_finite()) {
        return Err(Error::Argument(format!(
            "growth bounds must satisfy c > 0, c' >= 0; got c = {c}, c' = {c_prime}"
        )));
    }
    for (&ti, &hi) in t.iter().zip(h) {
        if !(hi > 0.0 && hi.is_finite()) {
            return Err(Error::Argument(format!("rate must be positive; h({ti}) = {hi}")));
        }
        let lower = c / (horizon - ti);
        let upper = lower + c_prime;
        if hi < lower * (1.0 - BOUND_SLACK) || hi > upper * (1.0 + BOUND_SLACK) {
            return Err(Error::Domain(format!(
                "tabulated rate violates the growth bounds at t = {ti}: {lower} <= {hi} <= {upper} fails"
            )));
        }
    }
    let ln_h: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let slope: Vec<f64> = t
        .windows(2)
        .zip(ln_h.windows(2))
        .map(|(tw, lw)| (lw[1] - lw[0]) / (tw[1] - tw[0]))
        .collect();
    let mut cumulative = Vec::with_capacity(t.len());
    cumulative.push(0.0);
    for i in 0..t.len() - 1 {
        let next = cumulative[i] + log_linear_integral(ln_h[i], slope[i], t[i + 1] - t[i]);
        cumulative.push(next);
    }
    let last = t.len() - 1;
    let tail_offset = (h[last] - c / (horizon - t[last])).max(0.0);
    Ok(Kind::Tabulated {
        t: t.clone(),
        ln_h,
        slope,
        cumulative,
        c,
        c_prime,
        tail_offset,
    })
}
