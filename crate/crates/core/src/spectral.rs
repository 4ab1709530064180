//! Cluster-count generating functions and the recurrence classification.
//!
//! `f_n = ∬ g(y) m^{n-1}(x, dy) γ(dx)` counts clusters produced at
//! generation `n` by the stem of one cluster, `F_n` does the same through
//! the full kernel. `F = f / (1 - f)`, and the convergence parameter of
//! the kernel is the `R` of [`crate::series::solve_r`] applied to `f`.

use serde::Serialize;

use crate::analytic::Criticality;
use crate::error::{Error, Result};
use crate::kernel::{AtomKernel, Part};
use crate::linalg::{dot, max_abs};
use crate::num::ser_ext;
use crate::series::{solve_r, PowerSeries, RadiusMethod};
use crate::space::Measure;

/// Default truncation order of all series.
pub const DEFAULT_ORDER: usize = 200;
/// Largest order [`order_for_tolerance`] will try.
pub const MAX_ORDER: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecurrenceClass {
    RTransient,
    RNullRecurrent,
    RPositiveRecurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenewalClass {
    Transient,
    PositiveRecurrent,
    NullRecurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDiagnostics {
    pub order: usize,
    pub radius_method: RadiusMethod,
    pub radius_unreliable: bool,
    pub ratio_spread: f64,
    /// Geometric tail estimate of `f(R)`.
    #[serde(serialize_with = "ser_ext")]
    pub tail_at_big_r: f64,
    /// Power-law exponent fitted to `f_n r^n`.
    #[serde(serialize_with = "ser_ext")]
    pub exponent_at_r: f64,
    /// Whether the tail of `f(R)` is below the tolerance.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    #[serde(serialize_with = "ser_ext")]
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    #[serde(rename = "fR")]
    pub f_big_r: f64,
    #[serde(rename = "fpR", serialize_with = "ser_ext")]
    pub fp_big_r: f64,
    pub class: RecurrenceClass,
    pub renewal_class: RenewalClass,
    #[serde(serialize_with = "ser_ext")]
    pub mean_generation_length: f64,
    pub criticality: Criticality,
    /// `f(r)`, infinite when the series diverges at its radius.
    #[serde(serialize_with = "ser_ext")]
    pub f_at_r: f64,
    /// gcd of the indices of nonzero `f_n`.
    pub period: usize,
    pub tolerance: f64,
    pub diagnostics: SeriesDiagnostics,
}

impl SpectralReport {
    pub fn is_recurrent(&self) -> bool {
        self.class != RecurrenceClass::RTransient
    }
}

/// Terms past this are dropped, leaving room for the factor `n` in `f'`.
const OVERFLOW_GUARD: f64 = 1e300;

/// `Σ_{n=1}^{N} (μᵀ P^{n-1} g) s^n` for `P` the stem or full matrix.
fn cluster_series(k: &AtomKernel, part: Part, mu: &[f64], n: usize) -> Result<PowerSeries> {
    if n == 0 {
        return Err(Error::InvalidParameter("truncation order must be >= 1".into()));
    }
    let mat = k.matrix(part);
    let mut v = k.g_states().to_vec();
    let mut terms = Vec::with_capacity(n);
    for j in 0..n {
        // clamp rounding noise; every term is a non-negative quantity
        let term = dot(mu, &v).max(0.0);
        if !(term <= OVERFLOW_GUARD) {
            log::warn!("series overflows at order {}; truncating to {j}", j + 1);
            break;
        }
        terms.push(term);
        if j + 1 < n {
            v = mat.mul_vec(&v);
        }
    }
    PowerSeries::from_terms(&terms)
}

fn check_series(fs: PowerSeries) -> Result<PowerSeries> {
    // surfaces assumption and radius errors
    fs.radius()?;
    Ok(fs)
}

/// `f_1..f_N`.
pub fn compute_fn(k: &AtomKernel, n: usize) -> Result<PowerSeries> {
    let fs = cluster_series(k, Part::Stem, k.gamma_mass(), n)?;
    let fs = match k.analytic_params() {
        Some(p) => fs.with_exact_radius(p.radius()),
        None => fs,
    };
    check_series(fs)
}

/// `F_1..F_N`.
#[allow(non_snake_case)]
pub fn compute_Fn(k: &AtomKernel, n: usize) -> Result<PowerSeries> {
    let fs = cluster_series(k, Part::Full, k.gamma_mass(), n)?;
    if fs.coeffs().iter().all(|&c| c == 0.0) {
        return Err(Error::AssumptionViolated { order: n });
    }
    Ok(fs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImmigrationSeries {
    pub f: PowerSeries,
    #[serde(rename = "F")]
    pub big_f: PowerSeries,
    /// `max_n |F~_n - (f~ (1 + F))_n|`.
    pub identity_residual: f64,
}

/// Series for a population started from `μ₀` instead of one cluster:
/// `f~_n = ∬ g(y) m^{n-1}(x, dy) μ₀(dx)` and `F~_n` likewise through `M`,
/// checked against `F~ = f~ (1 + F)`.
pub fn immigration_series(k: &AtomKernel, mu0: &Measure, n: usize) -> Result<ImmigrationSeries> {
    let mass = mu0.to_states(k.space())?;
    let f = cluster_series(k, Part::Stem, &mass, n)?;
    if f.coeffs().iter().all(|&c| c == 0.0) {
        return Err(Error::AssumptionViolated { order: n });
    }
    let big_f = cluster_series(k, Part::Full, &mass, n)?;
    let full = compute_Fn(k, n)?;
    let product = f.convolve(&full.one_plus());
    let diff: Vec<f64> = big_f
        .coeffs()
        .iter()
        .zip(product.coeffs())
        .map(|(a, b)| a - b)
        .collect();
    Ok(ImmigrationSeries {
        f,
        big_f,
        identity_residual: max_abs(&diff),
    })
}

/// Classification of an `f`-series with criticality tolerance `tol`.
pub fn classify_series(fs: &PowerSeries, tol: f64) -> Result<SpectralReport> {
    let est = fs.radius()?;
    let cp = solve_r(fs, est.radius)?;
    let big_r = cp.big_r;
    let fp = fs.derivative_at(big_r);
    let class = if cp.at_radius {
        RecurrenceClass::RTransient
    } else if fp.is_finite() {
        RecurrenceClass::RPositiveRecurrent
    } else {
        RecurrenceClass::RNullRecurrent
    };
    let renewal_class = match class {
        RecurrenceClass::RTransient => RenewalClass::Transient,
        RecurrenceClass::RPositiveRecurrent => RenewalClass::PositiveRecurrent,
        RecurrenceClass::RNullRecurrent => RenewalClass::NullRecurrent,
    };
    let tail = fs.evaluate(big_r).tail;
    let at = fs.at_radius(est.radius);
    Ok(SpectralReport {
        r: est.radius,
        big_r,
        f_big_r: cp.f_big_r,
        fp_big_r: fp,
        class,
        renewal_class,
        mean_generation_length: big_r * fp,
        criticality: Criticality::from_convergence(big_r, tol),
        f_at_r: cp.f_at_r,
        period: fs.period(),
        tolerance: tol,
        diagnostics: SeriesDiagnostics {
            order: fs.order(),
            radius_method: est.method,
            radius_unreliable: est.unreliable,
            ratio_spread: est.spread,
            tail_at_big_r: if cp.at_radius { cp.tail_at_r } else { tail },
            exponent_at_r: at.exponent,
            certified: if cp.at_radius {
                cp.tail_at_r <= tol
            } else {
                tail <= tol
            },
        },
    })
}

/// `r`, `R`, `f(R)`, `f'(R)` and the recurrence class of a kernel.
pub fn classify(k: &AtomKernel, n: usize) -> Result<SpectralReport> {
    classify_series(&compute_fn(k, n)?, k.tolerance())
}

/// Smallest power-of-two multiple of `start` whose `f`-series tail at `s`
/// is below `tol`, capped at [`MAX_ORDER`].
pub fn order_for_tolerance(k: &AtomKernel, s: f64, tol: f64, start: usize) -> Result<usize> {
    let mut n = start.max(16);
    loop {
        let fs = compute_fn(k, n)?;
        let tail = fs.evaluate(s).tail;
        if tail <= tol || n >= MAX_ORDER {
            return Ok(n);
        }
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticParams;

    #[test]
    fn pure_atom_series() {
        let k = AtomKernel::pure_atom(vec![0.5, 1.0], vec![0.4, 0.6]).unwrap();
        let a = 0.5 * 0.4 + 0.6;
        let f = compute_fn(&k, 20).unwrap();
        assert!((f.coeff(1) - a).abs() < 1e-15);
        assert!(f.coeffs()[2..].iter().all(|&c| c == 0.0));
        let big_f = compute_Fn(&k, 20).unwrap();
        for n in 1..=20 {
            assert!((big_f.coeff(n) - a.powi(n as i32)).abs() < 1e-12 * a.powi(n as i32));
        }
        let rep = classify(&k, 20).unwrap();
        assert!((rep.big_r - 1.0 / a).abs() < 1e-12);
        assert_eq!(rep.class, RecurrenceClass::RPositiveRecurrent);
        assert!((rep.fp_big_r - a).abs() < 1e-12);
    }

    #[test]
    fn analytic_coefficients() {
        let p = AnalyticParams::new(2.0, 2.0, 0.2).unwrap();
        let k = AtomKernel::analytic_on(p, None, 200).unwrap();
        let f = compute_fn(&k, 10).unwrap();
        assert!((f.coeff(1) - 0.2).abs() < 1e-12);
        assert!((f.coeff(2) - 0.2 / 1.5).abs() < 1e-6, "{}", f.coeff(2));
    }

    #[test]
    fn first_coefficients_agree() {
        let k = AtomKernel::dense(
            &[vec![0.5, 0.5], vec![0.25, 0.75]],
            vec![0.2, 0.4],
            vec![0.5, 0.5],
        )
        .unwrap();
        let f = compute_fn(&k, 1).unwrap();
        let big_f = compute_Fn(&k, 1).unwrap();
        assert_eq!(f.coeff(1), big_f.coeff(1));
    }

    #[test]
    fn immigration_from_gamma_reproduces_f() {
        let k = AtomKernel::dense(
            &[vec![0.5, 0.5], vec![0.25, 0.75]],
            vec![0.2, 0.4],
            vec![0.5, 0.5],
        )
        .unwrap();
        let imm = immigration_series(&k, k.gamma(), 30).unwrap();
        let f = compute_fn(&k, 30).unwrap();
        let big_f = compute_Fn(&k, 30).unwrap();
        assert!(imm.identity_residual < 1e-12);
        for n in 1..=30 {
            assert!((imm.f.coeff(n) - f.coeff(n)).abs() < 1e-15);
            assert!((imm.big_f.coeff(n) - big_f.coeff(n)).abs() < 1e-12);
        }
        let twice = immigration_series(&k, &k.gamma().scaled(2.0), 30).unwrap();
        for n in 1..=30 {
            assert!((twice.big_f.coeff(n) - 2.0 * big_f.coeff(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_g_violates_assumption() {
        let r = AtomKernel::from_stem(&[vec![0.5]], vec![0.0], vec![1.0]);
        // rejected at construction since g vanishes
        assert!(r.is_err());
    }
}
