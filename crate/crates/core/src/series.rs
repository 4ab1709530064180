//! Truncated power series with non-negative coefficients.
//!
//! A [`PowerSeries`] stores `c_0, c_1, ..., c_N` (the coefficient of `s^k`
//! at index `k`). Evaluation past the truncation order is covered by a
//! geometric tail estimate `c_N s^N q / (1 - q)`, `q = ρ s`, where `ρ` is
//! the estimated limit of `c_{n+1} / c_n`. At the radius itself the tail is
//! modelled as a power law `c_n r^n ~ n^{-p}` fitted to the last half of
//! the window.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::gcd;
use crate::num::{bisect_increasing, ser_ext};

/// Coefficients below this are treated as zero (underflow guard).
const ZERO_COEFF: f64 = 1e-300;
/// Fewer nonzero coefficients than this are treated as a polynomial.
const MIN_RATIO_TERMS: usize = 5;
/// Relative spread of late ratio estimates above which the radius is
/// flagged unreliable.
const RATIO_SPREAD_TOL: f64 = 1e-3;
/// Power-law exponents at or below this count as a divergent tail.
const DIVERGENT_EXPONENT: f64 = 1.05;
/// Partial sums above this are declared infinite.
const INFINITE_SUM: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMethod {
    /// Supplied by a closed form.
    Exact,
    /// Ratio test with Richardson smoothing.
    Ratio,
    /// Too few nonzero coefficients; treated as a polynomial.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEstimate {
    #[serde(serialize_with = "ser_ext")]
    pub radius: f64,
    pub method: RadiusMethod,
    /// Late ratio estimates disagree beyond tolerance.
    pub unreliable: bool,
    /// Relative spread of the late ratio estimates.
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    #[serde(serialize_with = "ser_ext")]
    pub value: f64,
    pub partial: f64,
    /// Geometric tail estimate; infinite when `q >= 1`.
    #[serde(serialize_with = "ser_ext")]
    pub tail: f64,
}

/// Sum of the series at its radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusSum {
    pub partial: f64,
    #[serde(serialize_with = "ser_ext")]
    pub tail: f64,
    /// Fitted decay exponent `p` of `c_n r^n ~ n^{-p}`.
    #[serde(serialize_with = "ser_ext")]
    pub exponent: f64,
    pub divergent: bool,
}

impl RadiusSum {
    #[allow(clippy::wrong_self_convention)]
    pub fn value(&self) -> f64 {
        if self.divergent {
            f64::INFINITY
        } else {
            self.partial + self.tail
        }
    }
}

/// `(L, c_L, d, u, K)`; see [`PowerSeries::continuation`].
type Continuation = (usize, f64, usize, f64, usize);

/// `c s^n`, through logarithms when `s^n` alone would overflow.
fn term(c: f64, s: f64, n: i32) -> f64 {
    let pow = s.powi(n);
    if pow.is_finite() || c == 0.0 || s <= 0.0 {
        c * pow
    } else {
        (c.ln() + n as f64 * s.ln()).exp()
    }
}

impl PowerSeries {
    /// Series from `c_0..c_N`; coefficients must be finite and `>= 0`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("empty coefficient list".into()));
        }
        if let Some((i, c)) = coeffs
            .iter()
            .enumerate()
            .find(|(_, &c)| !(c >= 0.0 && c.is_finite()))
        {
            return Err(Error::InvalidParameter(format!(
                "coefficient {i} is {c}; coefficients must be finite and >= 0"
            )));
        }
        Ok(PowerSeries {
            coeffs,
            exact_radius: None,
        })
    }

    /// Series `Σ_{n>=1} c_n s^n` from `c_1..c_N`.
    pub fn from_terms(terms: &[f64]) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(terms.len() + 1);
        coeffs.push(0.0);
        coeffs.extend_from_slice(terms);
        Self::new(coeffs)
    }

    pub fn with_exact_radius(mut self, r: f64) -> Self {
        self.exact_radius = Some(r);
        self
    }

    pub fn exact_radius(&self) -> Option<f64> {
        self.exact_radius
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `c_n`, zero past the truncation order.
    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs.get(n).copied().unwrap_or(0.0)
    }

    /// Truncation order `N`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn support(&self) -> Vec<usize> {
        (0..self.coeffs.len())
            .filter(|&n| self.coeffs[n] > ZERO_COEFF)
            .collect()
    }

    /// gcd of the indices of nonzero coefficients; 0 when all vanish.
    pub fn period(&self) -> usize {
        self.support().into_iter().fold(0, gcd)
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period() == 1
    }

    /// Local ratio `(c_n / c_{n-d})^{1/d}`.
    fn local_ratio(&self, n: usize, d: usize) -> Option<f64> {
        if n < d {
            return None;
        }
        let (a, b) = (self.coeffs[n], self.coeffs[n - d]);
        (a > ZERO_COEFF && b > ZERO_COEFF).then(|| (a / b).powf(1.0 / d as f64))
    }

    /// Radius of convergence: exact when supplied, otherwise a ratio test
    /// on the last half of the window with one or two Richardson passes
    /// (whichever is steadier).
    pub fn radius(&self) -> Result<RadiusEstimate> {
        if let Some(r) = self.exact_radius {
            return Ok(RadiusEstimate {
                radius: r,
                method: RadiusMethod::Exact,
                unreliable: false,
                spread: 0.0,
            });
        }
        let support = self.support();
        if support.is_empty() {
            return Err(Error::AssumptionViolated {
                order: self.order(),
            });
        }
        if support.len() < MIN_RATIO_TERMS {
            return Ok(RadiusEstimate {
                radius: f64::INFINITY,
                method: RadiusMethod::Polynomial,
                unreliable: false,
                spread: 0.0,
            });
        }
        let d = self.period();
        let last = *support.last().unwrap();
        let first_window = (last / 2).max(3 * d);
        let mut rho = Vec::new();
        let mut n = last;
        while n >= first_window {
            match self.local_ratio(n, d) {
                Some(r) => rho.push((n, r)),
                None => break,
            }
            n -= d;
        }
        rho.reverse();
        if rho.len() < 3 {
            // sparse tail: fall back to the overall growth between the
            // first and last nonzero coefficient
            let first = support[0];
            let q = (self.coeffs[last] / self.coeffs[first]).powf(1.0 / (last - first) as f64);
            return Ok(RadiusEstimate {
                radius: 1.0 / q,
                method: RadiusMethod::Ratio,
                unreliable: true,
                spread: f64::INFINITY,
            });
        }
        let rho_half = rho[0].1;
        let rho_last = rho.last().unwrap().1;
        if rho_last > 1.5 * rho_half && rho_last > 1.0 {
            return Err(Error::RadiusZero);
        }
        let df = d as f64;
        let first: Vec<(usize, f64)> = rho
            .windows(2)
            .map(|w| {
                let ((n0, r0), (n1, r1)) = (w[0], w[1]);
                (n1, (n1 as f64 * r1 - n0 as f64 * r0) / df)
            })
            .collect();
        let second: Vec<(usize, f64)> = first
            .windows(2)
            .map(|w| {
                let ((n0, q0), (n1, q1)) = (w[0], w[1]);
                let (a, b) = ((n1 * n1) as f64, (n0 * n0) as f64);
                (n1, (a * q1 - b * q0) / (a - b))
            })
            .collect();
        let spread = |v: &[(usize, f64)]| -> f64 {
            let tail = &v[v.len() - (v.len() / 2).max(1)..];
            let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let mid = tail.last().unwrap().1.abs().max(f64::MIN_POSITIVE);
            (hi - lo) / mid
        };
        let s1 = spread(&first);
        let (q, s) = if second.len() >= 2 && spread(&second) < s1 {
            (second.last().unwrap().1, spread(&second))
        } else {
            (first.last().unwrap().1, s1)
        };
        if !q.is_finite() {
            return Err(Error::RadiusZero);
        }
        let radius = if q <= ZERO_COEFF.sqrt() {
            f64::INFINITY
        } else {
            1.0 / q
        };
        Ok(RadiusEstimate {
            radius,
            method: RadiusMethod::Ratio,
            unreliable: s > RATIO_SPREAD_TOL,
            spread: s,
        })
    }

    /// `Σ_{n<=N} c_n s^n`, summed in ascending order.
    pub fn partial_sum(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow: f64 = 1.0;
        for (n, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 {
                acc += if pow.is_finite() { c * pow } else { term(c, s, n as i32) };
            }
            pow *= s;
        }
        acc
    }

    /// Value at `s >= 0` with the geometric tail estimate.
    pub fn evaluate(&self, s: f64) -> SeriesValue {
        let partial = self.partial_sum(s);
        let tail = self.geometric_tail(s);
        SeriesValue {
            value: partial + tail,
            partial,
            tail,
        }
    }

    /// Continuation `c_{L+kd} = c_L ρ^{kd}` of the last nonzero coefficient
    /// `c_L` past the truncation order: `(L, c_L, d, u = (ρ s)^d, K)` with `K`
    /// the number of continued steps already inside the order. `None` when
    /// there is nothing to continue; `u >= 1` when the continuation diverges.
    fn continuation(&self, s: f64) -> Option<Result<Continuation>> {
        if s <= 0.0 {
            return None;
        }
        let est = match self.radius() {
            Ok(e) => e,
            Err(Error::RadiusZero) => return Some(Err(Error::RadiusZero)),
            Err(_) => return None,
        };
        if est.method == RadiusMethod::Polynomial {
            return None;
        }
        let last = *self.support().last()?;
        let d = self.period().max(1);
        let local = self.local_ratio(last, d).unwrap_or(0.0);
        let rho = local.max(1.0 / est.radius);
        let u = (rho * s).powi(d as i32);
        Some(Ok((last, self.coeffs[last], d, u, (self.order() - last) / d)))
    }

    /// `Σ_{n>N} c_n s^n` under the geometric continuation.
    fn geometric_tail(&self, s: f64) -> f64 {
        match self.continuation(s) {
            None => 0.0,
            Some(Err(_)) => f64::INFINITY,
            Some(Ok((_, _, _, u, _))) if u >= 1.0 => f64::INFINITY,
            Some(Ok((last, c, _, u, k))) => term(c, s, last as i32) * u.powi(k as i32) * u / (1.0 - u),
        }
    }

    /// `Σ_{n>N} n c_n s^{n-1}` under the same continuation.
    fn geometric_tail_derivative(&self, s: f64) -> f64 {
        match self.continuation(s) {
            None => 0.0,
            Some(Err(_)) => f64::INFINITY,
            Some(Ok((_, _, _, u, _))) if u >= 1.0 => f64::INFINITY,
            Some(Ok((last, c, d, u, k))) => {
                // Σ_{j>k} (L + jd) u^j
                let uk1 = u.powi(k as i32 + 1);
                let plain = uk1 / (1.0 - u);
                let weighted = uk1 * ((k + 1) as f64 - k as f64 * u) / ((1.0 - u) * (1.0 - u));
                term(c, s, last as i32 - 1) * (last as f64 * plain + d as f64 * weighted)
            }
        }
    }

    /// Sum at the radius `r`, with a power-law tail.
    pub fn at_radius(&self, r: f64) -> RadiusSum {
        let partial = self.partial_sum(r);
        let support = self.support();
        if !r.is_finite() || support.len() < MIN_RATIO_TERMS {
            return RadiusSum {
                partial,
                tail: 0.0,
                exponent: f64::INFINITY,
                divergent: !r.is_finite(),
            };
        }
        let d = self.period().max(1);
        let last = *support.last().unwrap();
        let mid = *support.iter().find(|&&n| 2 * n >= last).unwrap();
        let t = |n: usize| term(self.coeffs[n], r, n as i32);
        let exponent = if mid == last {
            f64::INFINITY
        } else {
            -(t(last) / t(mid)).ln() / (last as f64 / mid as f64).ln()
        };
        let divergent = exponent <= DIVERGENT_EXPONENT || partial > INFINITE_SUM;
        let tail = if divergent {
            f64::INFINITY
        } else if exponent.is_infinite() {
            0.0
        } else {
            t(last) * last as f64 / (d as f64 * (exponent - 1.0))
        };
        RadiusSum {
            partial,
            tail,
            exponent,
            divergent,
        }
    }

    /// Term-wise derivative.
    pub fn derivative(&self) -> PowerSeries {
        let coeffs = if self.coeffs.len() > 1 {
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, c)| n as f64 * c)
                .collect()
        } else {
            vec![0.0]
        };
        PowerSeries {
            coeffs,
            exact_radius: self.exact_radius,
        }
    }

    /// `f'(s)`; infinite at or past the radius when the derivative series
    /// diverges there.
    pub fn derivative_at(&self, s: f64) -> f64 {
        let radius = self.radius().map(|e| e.radius).unwrap_or(f64::INFINITY);
        let v = if s >= radius * (1.0 - 1e-12) {
            self.derivative().at_radius(s).value()
        } else {
            self.derivative().partial_sum(s) + self.geometric_tail_derivative(s)
        };
        if v > INFINITE_SUM {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Cauchy product, truncated to the shorter order.
    pub fn convolve(&self, other: &PowerSeries) -> PowerSeries {
        let n = self.order().min(other.order());
        let coeffs = (0..=n)
            .map(|k| (0..=k).map(|i| self.coeffs[i] * other.coeffs[k - i]).sum())
            .collect();
        PowerSeries {
            coeffs,
            exact_radius: None,
        }
    }

    pub fn scaled(&self, k: f64) -> PowerSeries {
        PowerSeries {
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
            exact_radius: self.exact_radius,
        }
    }

    /// `(1 + self)`, i.e. with `c_0` incremented.
    pub fn one_plus(&self) -> PowerSeries {
        let mut out = self.clone();
        out.coeffs[0] += 1.0;
        out
    }
}

/// Coefficients of `c(s) = b(s) / (1 - a(s))` up to order `n`:
/// `c_k = b_k + Σ_{i=1}^{k} a_i c_{k-i}`.
pub fn renewal_quotient(a: &PowerSeries, b: &PowerSeries, n: usize) -> Result<PowerSeries> {
    for s in [a, b] {
        if s.order() < n {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: s.coeffs.len(),
            });
        }
    }
    if a.coeff(0) != 0.0 {
        return Err(Error::InvalidParameter("a(0) must vanish".into()));
    }
    let mut c = vec![0.0; n + 1];
    for k in 0..=n {
        let conv: f64 = (1..=k).map(|i| a.coeffs[i] * c[k - i]).sum();
        c[k] = b.coeffs[k] + conv;
    }
    PowerSeries::new(c)
}

/// `R` together with how it was determined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceParameter {
    #[serde(serialize_with = "ser_ext")]
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    /// `f(R)` (the root value, or `f(r)` when `R = r`).
    pub f_big_r: f64,
    /// Whether `R = r` (the `f(r) < 1` branch).
    pub at_radius: bool,
    /// `f(r)` as far as it could be decided.
    #[serde(serialize_with = "ser_ext")]
    pub f_at_r: f64,
    /// Tail estimate attached to `f(r)`.
    #[serde(serialize_with = "ser_ext")]
    pub tail_at_r: f64,
}

/// `R = r` if `f(r) < 1`, else the root of `f(R) = 1` in `(0, r]`.
pub fn solve_r(fs: &PowerSeries, r: f64) -> Result<ConvergenceParameter> {
    if fs.support().is_empty() {
        return Err(Error::AssumptionViolated { order: fs.order() });
    }
    let root_below = |hi: f64| {
        bisect_increasing(0.0, hi, 0.0, |s| {
            let v = fs.evaluate(s).value;
            if v.is_finite() {
                v - 1.0
            } else {
                f64::MAX
            }
        })
    };
    if !r.is_finite() {
        let mut hi = 1.0;
        while fs.evaluate(hi).value < 1.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NonConvergence {
                    iterations: 1000,
                    detail: "f stays below 1 on [0, 1e300]".into(),
                });
            }
        }
        let big_r = root_below(hi);
        return Ok(ConvergenceParameter {
            r,
            big_r,
            f_big_r: fs.evaluate(big_r).value,
            at_radius: false,
            f_at_r: f64::INFINITY,
            tail_at_r: 0.0,
        });
    }
    let at = fs.at_radius(r);
    if at.divergent || at.partial >= 1.0 {
        let big_r = root_below(r);
        return Ok(ConvergenceParameter {
            r,
            big_r,
            f_big_r: fs.evaluate(big_r).value,
            at_radius: false,
            f_at_r: at.value(),
            tail_at_r: at.tail,
        });
    }
    if at.partial + 2.0 * at.tail < 1.0 {
        return Ok(ConvergenceParameter {
            r,
            big_r: r,
            f_big_r: at.value(),
            at_radius: true,
            f_at_r: at.value(),
            tail_at_r: at.tail,
        });
    }
    Err(Error::InconclusiveAtRadius {
        radius: r,
        root: root_below(r),
        partial: at.partial,
        tail: at.tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(f: impl Fn(usize) -> f64, n: usize) -> PowerSeries {
        PowerSeries::from_terms(&(1..=n).map(f).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn geometric_radius() {
        let s = series(|n| 0.5f64.powi(n as i32), 200);
        let est = s.radius().unwrap();
        assert!((est.radius - 2.0).abs() < 1e-10);
        assert!(!est.unreliable);
    }

    #[test]
    fn power_law_radius_and_sum_at_radius() {
        let c = 0.3;
        let s = series(|n| c * 0.5f64.powi(n as i32) / (n * n) as f64, 200);
        let est = s.radius().unwrap();
        assert!((est.radius - 2.0).abs() < 1e-6, "{}", est.radius);
        let at = s.at_radius(2.0);
        assert!(!at.divergent);
        assert!((at.exponent - 2.0).abs() < 1e-2);
        let exact = c * PI * PI / 6.0;
        assert!((at.value() - exact).abs() < 1e-5, "{} vs {exact}", at.value());
    }

    #[test]
    fn transient_power_law_has_r_equal_radius() {
        let s = series(|n| 0.3 * 0.5f64.powi(n as i32) / (n * n) as f64, 200);
        let cp = solve_r(&s, 2.0).unwrap();
        assert!(cp.at_radius);
        assert_eq!(cp.big_r, 2.0);
        assert!((cp.f_at_r - 0.3 * PI * PI / 6.0).abs() < 1e-5);
    }

    #[test]
    fn linear_series_root() {
        let s = PowerSeries::from_terms(&[0.25]).unwrap();
        let est = s.radius().unwrap();
        assert_eq!(est.method, RadiusMethod::Polynomial);
        let cp = solve_r(&s, est.radius).unwrap();
        assert!((cp.big_r - 4.0).abs() < 1e-11);
    }

    #[test]
    fn geometric_series_root() {
        // f = r c s / (r - s), r = 1.5, c = 0.2
        let (r, c) = (1.5f64, 0.2);
        let s = series(|n| c * r.powi(1 - n as i32), 200).with_exact_radius(r);
        let cp = solve_r(&s, r).unwrap();
        assert!((cp.big_r - r / (1.0 + c * r)).abs() < 1e-12);
        assert!((cp.f_big_r - 1.0).abs() < 1e-12);
        // same answer without the exact radius
        let est = series(|n| c * r.powi(1 - n as i32), 200).radius().unwrap();
        assert!((est.radius - r).abs() < 1e-10);
    }

    #[test]
    fn super_geometric_growth_has_zero_radius() {
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let s = series(fact, 60);
        assert!(matches!(s.radius(), Err(Error::RadiusZero)));
    }

    #[test]
    fn zero_series_violates_assumption() {
        let s = PowerSeries::from_terms(&[0.0; 10]).unwrap();
        assert!(matches!(s.radius(), Err(Error::AssumptionViolated { .. })));
        assert!(matches!(solve_r(&s, 1.0), Err(Error::AssumptionViolated { .. })));
    }

    #[test]
    fn renewal_quotient_examples() {
        let n = 200;
        let pad = |v: &[f64]| {
            let mut c = v.to_vec();
            c.resize(n + 1, 0.0);
            PowerSeries::new(c).unwrap()
        };
        let s = pad(&[0.0, 1.0]);
        let c = renewal_quotient(&s, &s, n).unwrap();
        assert!(c.coeffs()[1..].iter().all(|&v| v == 1.0));

        let s2 = pad(&[0.0, 0.0, 1.0]);
        let c = renewal_quotient(&s2, &s2, 10).unwrap();
        assert_eq!(&c.coeffs()[1..7], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);

        let a = pad(&[0.0, 0.5, 0.5]);
        let c = renewal_quotient(&a, &s, n).unwrap();
        assert!((c.coeff(200) - 2.0 / 3.0).abs() < 1e-6);
        assert!(renewal_quotient(&a, &s, n + 1).is_err());
    }

    #[test]
    fn period_of_sparse_support() {
        let s = PowerSeries::from_terms(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.period(), 2);
        assert!(!s.is_aperiodic());
    }

    #[test]
    fn derivative_of_geometric() {
        let s = series(|n| 0.5f64.powi(n as i32), 200);
        // f = (s/2) / (1 - s/2), f' = 2 / (2 - s)^2
        assert!((s.derivative_at(1.0) - 2.0).abs() < 1e-10);
        let p = series(|n| 0.5f64.powi(n as i32) / n as f64, 400);
        // c_n r^n = 1/n: derivative diverges at the radius
        assert!(p.derivative_at(2.0).is_infinite());
    }

    #[test]
    fn tail_estimate_covers_truncation() {
        let full = series(|n| 0.5f64.powi(n as i32), 400);
        let short = series(|n| 0.5f64.powi(n as i32), 20);
        let v = short.evaluate(1.5);
        assert!(v.tail > 0.0);
        assert!((v.value - full.evaluate(1.5).value).abs() < 1e-12);
    }
}
