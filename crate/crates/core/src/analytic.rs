//! Closed forms for the three-parameter kernel on `[0, ∞)`:
//!
//! ```text
//! M(x, dy) = a e^{x-y} 1{y >= x} dy + c e^{-bx} δ_0(dy)
//! ```
//!
//! with stem part `m(x, dy) = a e^{x-y} 1{y >= x} dy`, atom function
//! `g(x) = c e^{-bx}` and atom measure `γ = δ_0`. The stem is a Markov
//! branching process counted generation-wise, types being birth times, so
//! `m^n(x, [0, t]) = a^n P(N_{t-x} >= n)` for a unit-rate Poisson process.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl Criticality {
    /// Criticality from the convergence parameter: `R > 1` means the
    /// Perron root `1/R` is below one.
    pub fn from_convergence(r: f64, tol: f64) -> Self {
        if (r - 1.0).abs() <= tol {
            Criticality::Critical
        } else if r > 1.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        }
    }
}

impl AnalyticParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("a = {a} must be > 0")));
        }
        if !(b > -1.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("b = {b} must be > -1")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c = {c} must be > 0")));
        }
        Ok(AnalyticParams { a, b, c })
    }

    /// Radius of convergence `r = (1 + b) / a` of `f`.
    pub fn radius(&self) -> f64 {
        (1.0 + self.b) / self.a
    }

    /// Convergence parameter `R = r / (1 + c r)`.
    pub fn convergence(&self) -> f64 {
        let r = self.radius();
        r / (1.0 + self.c * r)
    }

    /// Criticality threshold `c* = (r - 1) / r`.
    pub fn critical_c(&self) -> f64 {
        let r = self.radius();
        (r - 1.0) / r
    }

    pub fn criticality(&self, tol: f64) -> Criticality {
        Criticality::from_convergence(self.convergence(), tol)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.c * (-self.b * x).exp()
    }

    /// Density of the stem kernel.
    pub fn stem_density(&self, x: f64, y: f64) -> f64 {
        if y >= x {
            self.a * (x - y).exp()
        } else {
            0.0
        }
    }

    /// `f(s) = r c s / (r - s)` for `0 <= s < r`.
    pub fn f(&self, s: f64) -> f64 {
        let r = self.radius();
        r * self.c * s / (r - s)
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        let r = self.radius();
        r * r * self.c / ((r - s) * (r - s))
    }

    /// `f_n = c r^{1-n}`.
    pub fn f_coefficient(&self, n: usize) -> f64 {
        self.c * self.radius().powi(1 - n as i32)
    }

    /// `m^n(x, [0, t]) = a^n P(N_{t-x} >= n)`.
    pub fn stem_power(&self, n: usize, x: f64, t: f64) -> f64 {
        if n == 0 {
            return f64::from(u8::from(x <= t));
        }
        if t < x {
            return 0.0;
        }
        self.a.powi(n as i32) * poisson_tail(t - x, n)
    }

    /// `M(x, [0, t])`.
    pub fn kernel_interval(&self, x: f64, t: f64) -> f64 {
        self.stem_power(1, x, t) + self.g(x)
    }

    /// `m_s(x, [0, t]) = Σ_{n>=1} s^n m^{n-1}(x, [0, t])`.
    pub fn stem_resolvent(&self, s: f64, x: f64, t: f64) -> f64 {
        if t < x {
            return 0.0;
        }
        let k = self.a * s - 1.0;
        if k.abs() < 1e-12 {
            s * (1.0 + (t - x))
        } else {
            s / (1.0 - self.a * s) * (1.0 - self.a * s * ((t - x) * k).exp())
        }
    }

    /// `h_s(x) = f(s) e^{-bx}`.
    pub fn h(&self, s: f64, x: f64) -> f64 {
        self.f(s) * (-self.b * x).exp()
    }

    /// `π_s([0, t]) = s + a s² ∫_0^t e^{(as-1)y} dy`.
    pub fn pi_interval(&self, s: f64, t: f64) -> f64 {
        let k = self.a * s - 1.0;
        let integral = if k.abs() < 1e-12 {
            t
        } else {
            (k * t).exp_m1() / k
        };
        s + self.a * s * s * integral
    }

    /// Density of `π_s` on `(0, ∞)`; the atom at 0 has mass `s`.
    pub fn pi_density(&self, s: f64, y: f64) -> f64 {
        self.a * s * s * ((self.a * s - 1.0) * y).exp()
    }

    /// `h(x) π([0, t])` at `s = R`: the closed form as printed for the
    /// example, which omits the `1 / (R² f'(R))` scaling of the general
    /// limit theorem.
    pub fn limit_unscaled(&self, x: f64, t: f64) -> f64 {
        let rr = self.convergence();
        let k = self.a * rr - 1.0;
        let shape = if k.abs() < 1e-12 {
            rr + self.a * rr * rr * t
        } else {
            (self.a * rr * rr * (k * t).exp() - rr) / k
        };
        (-self.b * x).exp() * shape
    }

    /// `lim R^n M^n(x, [0, t]) = h(x) π([0, t]) / (R² f'(R))`. Since
    /// `R² f'(R) = 1 / c` here, this is `c` times [`Self::limit_unscaled`].
    pub fn limit(&self, x: f64, t: f64) -> f64 {
        self.c * self.limit_unscaled(x, t)
    }

    /// `lim R^n M^n(x, E)`, finite only when `a R < 1`.
    pub fn limit_whole(&self, x: f64) -> Option<f64> {
        let rr = self.convergence();
        let ar = self.a * rr;
        (ar < 1.0).then(|| self.c * rr * (-self.b * x).exp() / (1.0 - ar))
    }

    /// Decay rate of the slowest tail the truncated grid cuts off.
    pub fn truncation_error(&self, upper: f64) -> f64 {
        (-(1.0f64.min(1.0 + self.b)) * upper).exp()
    }

    /// Grid bound making [`Self::truncation_error`] fall below `1e-12`.
    pub fn default_upper(&self) -> f64 {
        12.0 * std::f64::consts::LN_10 / 1.0f64.min(1.0 + self.b)
    }
}

/// `P(N_λ >= n)` for a Poisson variable with mean `λ`.
pub fn poisson_tail(lambda: f64, n: usize) -> f64 {
    if n == 0 {
        1.0
    } else if lambda <= 0.0 {
        0.0
    } else {
        gamma_lr(n as f64, lambda)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticReference {
    pub params: AnalyticParams,
    pub s: f64,
    pub x: f64,
    pub t: f64,
    pub f_s: f64,
    #[serde(rename = "r")]
    pub radius: f64,
    #[serde(rename = "R")]
    pub convergence: f64,
    pub criticality: Criticality,
    pub m_s: f64,
    pub h_s: f64,
    pub pi_s: f64,
    /// Perron-Frobenius limit `h(x) π([0, t]) / (R² f'(R))`.
    pub limit: f64,
    /// `h(x) π([0, t])` without the `1 / (R² f'(R))` factor.
    pub limit_unscaled: f64,
}

/// Reference bundle of closed-form values at `(s, x, t)`.
pub fn analytic_reference(
    a: f64,
    b: f64,
    c: f64,
    s: f64,
    x: f64,
    t: f64,
) -> Result<AnalyticReference> {
    let p = AnalyticParams::new(a, b, c)?;
    let r = p.radius();
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must be > 0")));
    }
    if s >= r {
        return Err(Error::Divergent {
            s,
            detail: format!("f diverges for s >= r = {r}"),
        });
    }
    Ok(AnalyticReference {
        params: p,
        s,
        x,
        t,
        f_s: p.f(s),
        radius: r,
        convergence: p.convergence(),
        criticality: p.criticality(1e-12),
        m_s: p.stem_resolvent(s, x, t),
        h_s: p.h(s, x),
        pi_s: p.pi_interval(s, t),
        limit: p.limit(x, t),
        limit_unscaled: p.limit_unscaled(x, t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_boundary_at_one_third() {
        let p = AnalyticParams::new(2.0, 2.0, 1.0 / 3.0).unwrap();
        assert!((p.radius() - 1.5).abs() < 1e-15);
        assert!((p.critical_c() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.convergence() - 1.0).abs() < 1e-15);
        assert_eq!(p.criticality(1e-12), Criticality::Critical);
        let sub = AnalyticParams::new(2.0, 2.0, 0.2).unwrap();
        assert_eq!(sub.criticality(1e-12), Criticality::Subcritical);
        let sup = AnalyticParams::new(2.0, 2.0, 0.36).unwrap();
        assert_eq!(sup.criticality(1e-12), Criticality::Supercritical);
    }

    #[test]
    fn f_series_expansion_matches_closed_form() {
        let p = AnalyticParams::new(2.0, 2.0, 0.2).unwrap();
        let s: f64 = 0.7;
        let series: f64 = (1..400).map(|n| p.f_coefficient(n) * s.powi(n as i32)).sum();
        assert!((series - p.f(s)).abs() < 1e-13);
        assert!((p.f_coefficient(1) - 0.2).abs() < 1e-15);
        assert!((p.f_coefficient(2) - 0.2 / 1.5).abs() < 1e-15);
        // small-s behaviour f(s) ~ c s
        assert!((p.f(1e-9) / 1e-9 - 0.2).abs() < 1e-8);
    }

    #[test]
    fn f_at_convergence_parameter_is_one() {
        for c in [0.1, 0.2, 1.0 / 3.0, 0.5] {
            let p = AnalyticParams::new(2.0, 2.0, c).unwrap();
            assert!((p.f(p.convergence()) - 1.0).abs() < 1e-14);
            // R² f'(R) = 1/c
            let rr = p.convergence();
            assert!((rr * rr * p.f_prime(rr) - 1.0 / c).abs() < 1e-12);
        }
    }

    #[test]
    fn stem_resolvent_matches_poisson_series() {
        let p = AnalyticParams::new(2.0, 2.0, 0.2).unwrap();
        let (s, x, t) = (0.4f64, 0.3, 1.7);
        let series: f64 = (1..200)
            .map(|n| s.powi(n as i32) * p.stem_power(n - 1, x, t))
            .sum();
        assert!((series - p.stem_resolvent(s, x, t)).abs() < 1e-13);
    }

    #[test]
    fn reference_rejects_divergent_s() {
        assert!(matches!(
            analytic_reference(2.0, 2.0, 0.2, 1.5, 0.0, 1.0),
            Err(Error::Divergent { .. })
        ));
        assert!(analytic_reference(2.0, -1.5, 0.2, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn pi_interval_is_integral_of_density() {
        let p = AnalyticParams::new(2.0, 2.0, 0.2).unwrap();
        let (s, t) = (1.0, 2.0);
        let n = 20000;
        let h = t / n as f64;
        let trap: f64 = (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * h * p.pi_density(s, k as f64 * h)
            })
            .sum();
        assert!((s + trap - p.pi_interval(s, t)).abs() < 1e-6);
    }
}
