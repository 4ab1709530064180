//! The `s`-subinvariant pair
//! `h_s(x) = Σ_{n>=1} s^n ∫ g(y) m^{n-1}(x, dy)` and
//! `π_s(A) = Σ_{n>=1} s^n ∫ m^{n-1}(x, A) γ(dx)`,
//! and at `s = R` the `R`-invariant pair `(h, π)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{AtomKernel, Part};
use crate::linalg::{dot, max_abs};
use crate::num::ser_ext;
use crate::spectral::{classify, compute_fn, SpectralReport};
use crate::space::{Measure, SetDescriptor, TypeFunction, TypeSpace};

/// Values above this are reported as effectively infinite.
pub const EFFECTIVELY_INFINITE: f64 = 1e12;

/// Truncated `h_s` or `π_s` with its tail estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFunction {
    pub h: TypeFunction,
    #[serde(serialize_with = "ser_ext")]
    pub tail_bound: f64,
    /// Points where the value exceeds [`EFFECTIVELY_INFINITE`].
    pub effectively_infinite: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesMeasure {
    pub pi: Measure,
    #[serde(serialize_with = "ser_ext")]
    pub tail_bound: f64,
}

fn radius_of(k: &AtomKernel, n: usize) -> Result<f64> {
    Ok(compute_fn(k, n)?.radius()?.radius)
}

/// `Σ_{j>=1} s^j v_j` for `v_1 = start`, `v_{j+1} = step(v_j)`: `N` terms
/// plus a geometric continuation, and a bound on everything past `N`.
/// Errors when `s` exceeds the radius `r`.
fn sum_series(
    s: f64,
    r: f64,
    n: usize,
    start: Vec<f64>,
    step: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, f64)> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must be > 0")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("truncation order must be >= 1".into()));
    }
    if s > r * (1.0 + 1e-12) {
        return Err(Error::Divergent {
            s,
            detail: format!("s exceeds the radius r = {r} of the stem series"),
        });
    }
    // carry w_j = s^j v_j so that large stem norms do not overflow
    let mut acc = vec![0.0; start.len()];
    let mut w: Vec<f64> = start.iter().map(|x| s * x).collect();
    for j in 0..n {
        for (a, x) in acc.iter_mut().zip(&w) {
            *a += x;
        }
        if j + 1 < n {
            w = step(&w).into_iter().map(|x| s * x).collect();
        }
    }
    // Past the truncation the terms shrink by a factor close to s times the
    // last norm ratio; they are added as a geometric continuation of the
    // next term, and bounded with the more pessimistic factor s / r.
    let next: Vec<f64> = step(&w).into_iter().map(|x| s * x).collect();
    let w_norm = max_abs(&w);
    let local = if w_norm > 0.0 { max_abs(&next) / (s * w_norm) } else { 0.0 };
    let q_est = s * local;
    if q_est < 1.0 {
        for (a, x) in acc.iter_mut().zip(&next) {
            *a += x / (1.0 - q_est);
        }
    }
    let q = s * local.max(1.0 / r);
    let head = max_abs(&next);
    let tail = if head == 0.0 {
        0.0
    } else if q >= 1.0 {
        f64::INFINITY
    } else {
        head / (1.0 - q)
    };
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergent {
            s,
            detail: "partial sums overflow".into(),
        });
    }
    Ok((acc, tail))
}

fn hs_with_radius(k: &AtomKernel, s: f64, n: usize, r: f64) -> Result<SeriesFunction> {
    let stem = k.matrix(Part::Stem);
    let (states, tail) = sum_series(s, r, n, k.g_states().to_vec(), |v| stem.mul_vec(v))?;
    let h = TypeFunction::from_states(k.space(), &states);
    let effectively_infinite = h
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > EFFECTIVELY_INFINITE)
        .map(|(i, _)| i)
        .collect();
    Ok(SeriesFunction {
        h,
        tail_bound: tail,
        effectively_infinite,
    })
}

fn pis_with_radius(k: &AtomKernel, s: f64, n: usize, r: f64) -> Result<SeriesMeasure> {
    let stem = k.matrix(Part::Stem);
    let (mass, tail) = sum_series(s, r, n, k.gamma_mass().to_vec(), |v| stem.vec_mul(v))?;
    Ok(SeriesMeasure {
        pi: Measure::from_states(k.space(), &mass),
        tail_bound: tail,
    })
}

/// `h_s` truncated at order `n`.
pub fn compute_hs(k: &AtomKernel, s: f64, n: usize) -> Result<SeriesFunction> {
    hs_with_radius(k, s, n, radius_of(k, n)?)
}

/// `π_s` truncated at order `n`.
pub fn compute_pis(k: &AtomKernel, s: f64, n: usize) -> Result<SeriesMeasure> {
    pis_with_radius(k, s, n, radius_of(k, n)?)
}

/// `π_s(A) = Σ_{j>=1} s^j ∫ m^{j-1}(x, A) γ(dx)`, with `m^{j-1}(·, A)`
/// evaluated through the kernel's set function. This matches
/// [`AtomKernel::iterate`] term by term, which keeps kernel-side and
/// measure-side evaluations of a set on the same discretization.
pub fn pis_of_set(k: &AtomKernel, s: f64, set: &SetDescriptor, n: usize) -> Result<f64> {
    let r = radius_of(k, n)?;
    let gamma_a = k.gamma().of_set(k.space(), set)?;
    if n == 1 {
        return Ok(s * gamma_a);
    }
    let stem = k.matrix(Part::Stem);
    let phi = k.set_function(set, Part::Stem)?;
    let (acc, _) = sum_series(s, r, n - 1, phi, |v| stem.mul_vec(v))?;
    Ok(s * gamma_a + s * dot(k.gamma_mass(), &acc))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubinvarianceReport {
    pub s: f64,
    pub f_of_s: f64,
    /// `max_x |∫h(y)M(x,dy) - h(x)/s + (1 - f(s)) g(x)|`, each term
    /// relative to `max(1, h(x)/s)`.
    pub function_residual: f64,
    /// `max_A |∫M(y,A)π(dy) - π(A)/s + (1 - f(s)) γ(A)|` over test sets,
    /// each term relative to `max(1, π(A)/s)`.
    pub measure_residual: f64,
    pub tolerance: f64,
    pub subinvariant: bool,
    /// `f(s) = 1` within tolerance, so the pair is invariant.
    pub invariant: bool,
}

/// Test sets: every singleton of a finite space; `[0, t]` at the nodes
/// nearest the deciles of a grid. The grid sets are evaluated on state
/// masses so that the check is exact for the discretized kernel.
fn test_sets(space: &TypeSpace) -> Vec<Vec<usize>> {
    match space {
        TypeSpace::Finite { labels } => (0..labels.len()).map(|i| vec![i]).collect(),
        TypeSpace::Grid(g) => {
            let loc = space.state_locations();
            (1..=10)
                .map(|q| {
                    let t = g.nodes()[(q * (g.len() - 1)) / 10];
                    (0..loc.len()).filter(|&k| loc[k] <= t).collect()
                })
                .collect()
        }
    }
}

/// Residuals of the subinvariance identities for a candidate pair.
pub fn check_subinvariance(
    k: &AtomKernel,
    s: f64,
    h: &TypeFunction,
    pi: &Measure,
) -> Result<SubinvarianceReport> {
    check_subinvariance_with(k, s, h, pi, crate::spectral::DEFAULT_ORDER)
}

pub fn check_subinvariance_with(
    k: &AtomKernel,
    s: f64,
    h: &TypeFunction,
    pi: &Measure,
    n: usize,
) -> Result<SubinvarianceReport> {
    let tol = k.tolerance();
    let f_s = compute_fn(k, n)?.evaluate(s).value;
    if f_s > 1.0 + tol {
        return Err(Error::Precondition(format!("f(s) = {f_s} > 1 at s = {s}")));
    }
    let defect = 1.0 - f_s;
    let hv = h.to_states(k.space())?;
    let mh = k.matrix(Part::Full).mul_vec(&hv);
    let function_residual = (0..hv.len())
        .map(|i| (mh[i] - hv[i] / s + defect * k.g_states()[i]).abs() / (hv[i] / s).max(1.0))
        .fold(0.0, f64::max);
    let pm = pi.to_states(k.space())?;
    let pim = k.matrix(Part::Full).vec_mul(&pm);
    let nu: Vec<f64> = (0..pm.len())
        .map(|j| pim[j] - pm[j] / s + defect * k.gamma_mass()[j])
        .collect();
    let measure_residual = test_sets(k.space())
        .iter()
        .map(|set| {
            let scale = set.iter().map(|&j| pm[j]).sum::<f64>() / s;
            set.iter().map(|&j| nu[j]).sum::<f64>().abs() / scale.max(1.0)
        })
        .fold(0.0, f64::max);
    let subinvariant = function_residual <= tol && measure_residual <= tol;
    Ok(SubinvarianceReport {
        s,
        f_of_s: f_s,
        function_residual,
        measure_residual,
        tolerance: tol,
        subinvariant,
        invariant: subinvariant && defect.abs() <= tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalization {
    /// `∫ h dγ`.
    pub h_gamma: f64,
    /// `∫ g dπ`.
    pub g_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantPair {
    pub s: f64,
    pub h: TypeFunction,
    pub pi: Measure,
    pub f_of_s: f64,
    /// `∫ h_s dπ_s`.
    pub hpi_product: f64,
    /// `s² f'(s)`, the value `hpi_product` should take.
    #[serde(serialize_with = "ser_ext")]
    pub expected_hpi: f64,
    pub normalization: Normalization,
    #[serde(serialize_with = "ser_ext")]
    pub tail_bound: f64,
    /// Tails of both series are below the kernel tolerance.
    pub certified: bool,
    pub effectively_infinite: Vec<usize>,
}

/// `(h_s, π_s)` with the identities `∫h_s dγ = ∫g dπ_s = f(s)` and
/// `∫h_s dπ_s = s² f'(s)` evaluated.
pub fn subinvariant_pair(k: &AtomKernel, s: f64, n: usize) -> Result<InvariantPair> {
    let fs = compute_fn(k, n)?;
    let r = fs.radius()?.radius;
    let h = hs_with_radius(k, s, n, r)?;
    let pi = pis_with_radius(k, s, n, r)?;
    let space = k.space();
    let h_gamma = k.gamma().integrate(space, &h.h)?;
    let g_pi = pi.pi.integrate(space, k.g())?;
    let hpi = pi.pi.integrate(space, &h.h)?;
    let tail_bound = h.tail_bound.max(pi.tail_bound);
    Ok(InvariantPair {
        s,
        h: h.h,
        pi: pi.pi,
        f_of_s: fs.evaluate(s).value,
        hpi_product: hpi,
        expected_hpi: s * s * fs.derivative_at(s),
        normalization: Normalization { h_gamma, g_pi },
        tail_bound,
        certified: tail_bound <= k.tolerance(),
        effectively_infinite: h.effectively_infinite,
    })
}

/// The `R`-invariant pair, normalized by `∫h dγ = ∫g dπ = 1`.
pub fn invariant_pair(k: &AtomKernel, n: usize) -> Result<InvariantPair> {
    let report = classify(k, n)?;
    invariant_pair_from(k, &report, n)
}

pub fn invariant_pair_from(
    k: &AtomKernel,
    report: &SpectralReport,
    n: usize,
) -> Result<InvariantPair> {
    if !report.is_recurrent() {
        return Err(Error::NotRecurrent {
            f_at_r: report.f_at_r,
        });
    }
    subinvariant_pair(k, report.big_r, n)
}
