//! Mergeable streaming statistics.
//!
//! [`Moments`] keeps central moment sums up to order four using the pairwise
//! update formulas of Chan et al. and Pébay, so partial results computed by
//! independent workers can be combined exactly (up to rounding) in any order.

use serde::Serialize;

/// Count, mean, central moment sums `M2..M4`, minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    min: f64,
    max: f64,
}

impl Default for Moments {
    fn default() -> Self {
        Self::new()
    }
}

impl Moments {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Combines two accumulators as if all samples had been pushed into one.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += other.n;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the sample standard deviation,
    /// `sqrt((mu4 - sigma^4) / n) / (2 sigma)`.
    pub fn sd_standard_error(&self) -> f64 {
        let n = self.n as f64;
        let var = self.m2 / n;
        let mu4 = self.m4 / n;
        ((mu4 - var * var).max(0.0) / n).sqrt() / (2.0 * var.sqrt())
    }

    /// Sample skewness `g1 = sqrt(n) M3 / M2^{3/2}`.
    pub fn skewness(&self) -> f64 {
        let n = self.n as f64;
        if self.m2 == 0.0 {
            return 0.0;
        }
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Excess kurtosis `g2 = n M4 / M2^2 - 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        let n = self.n as f64;
        if self.m2 == 0.0 {
            return 0.0;
        }
        n * self.m4 / (self.m2 * self.m2) - 3.0
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Density-normalized histogram on uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// `bins` uniform bins on `[lo, hi]`; samples outside the range are dropped
    /// before normalization. Returns `None` if no sample falls in range or the
    /// range is empty.
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Option<Self> {
        if !(hi > lo) || bins == 0 {
            return None;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        let mut total = 0u64;
        for &x in samples {
            if x < lo || x > hi || !x.is_finite() {
                continue;
            }
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
            total += 1;
        }
        if total == 0 {
            return None;
        }
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let density = counts
            .iter()
            .map(|&c| c as f64 / (total as f64 * width))
            .collect();
        Some(Self { edges, density })
    }

    /// `sum density * width`, which is 1 by construction.
    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

/// Pearson correlation of two equally long series; `None` when either has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Empirical quantile by linear interpolation between order statistics;
/// `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
        let (m2, m3, m4) = (c(2), c(3), c(4));
        (mean, m2 * n / (n - 1.0), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    }

    #[test]
    fn matches_two_pass_formulas() {
        let xs: Vec<f64> = (0..1000).map(|k| ((k as f64) * 0.37).sin().powi(3) + 0.01 * k as f64).collect();
        let m = Moments::from_slice(&xs);
        let (mean, var, skew, kurt) = naive(&xs);
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-12);
        assert!((m.skewness() - skew).abs() < 1e-10);
        assert!((m.excess_kurtosis() - kurt).abs() < 1e-10);
    }

    #[test]
    fn merge_equals_single_pass() {
        let xs: Vec<f64> = (0..777).map(|k| ((k * k) % 97) as f64 / 7.0).collect();
        let whole = Moments::from_slice(&xs);
        let mut merged = Moments::new();
        for chunk in xs.chunks(100) {
            merged.merge(&Moments::from_slice(chunk));
        }
        assert_eq!(merged.count(), whole.count());
        for (a, b) in [
            (merged.mean(), whole.mean()),
            (merged.variance(), whole.variance()),
            (merged.skewness(), whole.skewness()),
            (merged.excess_kurtosis(), whole.excess_kurtosis()),
        ] {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert_eq!(merged.min(), whole.min());
        assert_eq!(merged.max(), whole.max());
    }

    #[test]
    fn constant_sample() {
        let m = Moments::from_slice(&[2.0; 10]);
        assert_eq!(m.sd(), 0.0);
        assert_eq!(m.skewness(), 0.0);
    }

    #[test]
    fn histogram_is_normalized() {
        let xs: Vec<f64> = (0..1000).map(|k| (k as f64 / 999.0) * 3.0 - 1.0).collect();
        let h = Histogram::new(&xs, -1.0, 2.0, 200).unwrap();
        assert!((h.mass() - 1.0).abs() < 1e-12);
        assert_eq!(h.edges.len(), 201);
        assert!(Histogram::new(&xs, 5.0, 6.0, 10).is_none());
    }

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y = [4.0, 3.0, 2.0, 1.0];
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_none());
    }

    #[test]
    fn quantiles() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.125), 0.5);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }
}
