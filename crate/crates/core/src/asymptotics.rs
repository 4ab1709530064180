//! Limits of `R^n M^n(x, A)`, the resolvent decomposition
//! `M_s = m_s + h_s ⊗ π_s / (1 - f(s))`, and a power-iteration eigen
//! oracle for finite kernels.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::detect_period;
use crate::kernel::{AtomKernel, Part};
use crate::linalg::{dot, max_abs};
use crate::num::{ser_ext, ser_ext_opt};
use crate::space::{Measure, Point, SetDescriptor, TypeFunction};
use crate::spectral::{
    classify, compute_fn, RecurrenceClass, SpectralReport, DEFAULT_ORDER,
};
use crate::invariant::{compute_hs, pis_of_set, subinvariant_pair};

/// Default length of a limit trace.
pub const DEFAULT_NMAX: usize = 500;
/// Length of the trailing window examined for convergence.
const TRAILING_INCREMENTS: usize = 10;
/// Thresholds tried for `A ⊆ {g >= ε}`.
const EPS_GRID: [f64; 9] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
/// Relative step for the sensitivity of the limit to `R`.
const SENSITIVITY_STEP: f64 = 1e-6;
const POWER_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenOracle {
    pub rho: f64,
    /// Right eigenvector, max-normalized.
    pub right: TypeFunction,
    /// Left eigenvector, max-normalized.
    pub left: Measure,
    pub iterations: usize,
}

/// Dominant eigenvalue and eigenvectors of a finite irreducible aperiodic
/// kernel by power iteration.
pub fn power_iteration_oracle(k: &AtomKernel) -> Result<EigenOracle> {
    let period = detect_period(k)?;
    if period.period > 1 {
        return Err(Error::Periodic {
            period: period.period,
        });
    }
    let m = k.matrix(Part::Full);
    let (rho, right, it_r) = power_iterate(|v| m.mul_vec(v), m.rows())?;
    let (_, left, it_l) = power_iterate(|v| m.vec_mul(v), m.rows())?;
    Ok(EigenOracle {
        rho,
        right: TypeFunction::new(right),
        left: Measure::atomic(left),
        iterations: it_r.max(it_l),
    })
}

fn power_iterate(apply: impl Fn(&[f64]) -> Vec<f64>, n: usize) -> Result<(f64, Vec<f64>, usize)> {
    let mut v = vec![1.0; n];
    let mut rho = 0.0;
    for it in 1..=POWER_ITERATIONS {
        let w = apply(&v);
        rho = max_abs(&w);
        if rho == 0.0 {
            return Err(Error::NonConvergence {
                iterations: it,
                detail: "iterate vanished (nilpotent kernel)".into(),
            });
        }
        let next: Vec<f64> = w.iter().map(|x| x / rho).collect();
        // |Mv - ρv| with v max-normalized
        let resid = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        v = next;
        if resid <= 1e-13 {
            let w = apply(&v);
            let rho = max_abs(&w);
            let check = w
                .iter()
                .zip(&v)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - rho * b).abs()));
            if check <= 1e-12 * rho {
                return Ok((rho, v, it));
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: POWER_ITERATIONS,
        detail: format!("power iteration stalled near rho = {rho}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub s: f64,
    pub f_of_s: f64,
    /// `M_s(x, A) = Σ_{n>=1} s^n M^{n-1}(x, A)`.
    pub full_resolvent: f64,
    /// `m_s(x, A) + h_s(x) π_s(A) / (1 - f(s))`.
    pub decomposed: f64,
    pub residual: f64,
    /// Terms summed on each side.
    pub terms: usize,
}

/// `Σ_{n>=1} s^n P^{n-1}(x, A)` summed until the terms are negligible.
fn resolvent(k: &AtomKernel, part: Part, s: f64, state: usize, set: &SetDescriptor) -> Result<(f64, usize)> {
    let mat = k.matrix(part);
    let mut sum = s * k.space().indicator(set)?[state];
    let mut phi: Vec<f64> = k.set_function(set, part)?;
    let mut pow = s * s;
    let cap = 1_000_000;
    for n in 2..cap {
        let term = pow * phi[state];
        sum += term;
        // stop once the whole vector of future terms is negligible
        if pow * max_abs(&phi) <= 1e-17 * sum.abs().max(f64::MIN_POSITIVE) && n > 2 {
            return Ok((sum, n));
        }
        phi = mat.mul_vec(&phi);
        pow *= s;
        if !sum.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: cap,
        detail: format!("resolvent series at s = {s} did not settle"),
    })
}

/// Both sides of `M_s(x,A) = m_s(x,A) + h_s(x) π_s(A) / (1 - f(s))`.
pub fn resolvent_decomposition(
    k: &AtomKernel,
    s: f64,
    x: &Point,
    set: &SetDescriptor,
) -> Result<DecompositionReport> {
    resolvent_decomposition_with(k, s, x, set, DEFAULT_ORDER)
}

pub fn resolvent_decomposition_with(
    k: &AtomKernel,
    s: f64,
    x: &Point,
    set: &SetDescriptor,
    n: usize,
) -> Result<DecompositionReport> {
    let f_s = compute_fn(k, n)?.evaluate(s).value;
    if !(f_s < 1.0) {
        return Err(Error::Precondition(format!("f(s) = {f_s} >= 1 at s = {s}")));
    }
    let state = k.space().state_of(x)?;
    let (full, n_full) = resolvent(k, Part::Full, s, state, set)?;
    let (stem, n_stem) = resolvent(k, Part::Stem, s, state, set)?;
    // the series for h_s and π_s share the truncation of the stem resolvent
    let order = n.max(n_stem);
    let h = compute_hs(k, s, order)?;
    let h_x = h.h.values[k.space().state_node(state)];
    let pi_a = pis_of_set(k, s, set, order)?;
    let decomposed = stem + h_x * pi_a / (1.0 - f_s);
    Ok(DecompositionReport {
        s,
        f_of_s: f_s,
        full_resolvent: full,
        decomposed,
        residual: (full - decomposed).abs(),
        terms: n_full.max(n_stem),
    })
}

/// `max_{n<=n_max} |M^n(x,A) - m^n(x,A) - Σ_{i=1}^{n} (m^{i-1}g)(x) (γM^{n-i})(A)|`,
/// the coefficient form of the resolvent decomposition.
pub fn coefficient_decomposition_residual(
    k: &AtomKernel,
    n_max: usize,
    x: &Point,
    set: &SetDescriptor,
) -> Result<f64> {
    let state = k.space().state_of(x)?;
    let stem = k.matrix(Part::Stem);
    // (m^{i-1} g)(x) for i = 1..n_max
    let mut mg = Vec::with_capacity(n_max);
    let mut v = k.g_states().to_vec();
    for _ in 0..n_max {
        mg.push(v[state]);
        v = stem.mul_vec(&v);
    }
    // M^n(·, A) and m^n(·, A), advanced one power at a time
    let full = k.matrix(Part::Full);
    let gamma = k.gamma_mass();
    let mut phi_full = k.power_function(0, set, Part::Full)?;
    let mut phi_stem = k.power_function(1, set, Part::Stem)?;
    let mut gm = Vec::with_capacity(n_max);
    let mut worst: f64 = 0.0;
    for n in 1..=n_max {
        gm.push(crate::linalg::dot(gamma, &phi_full));
        phi_full = if n == 1 {
            k.power_function(1, set, Part::Full)?
        } else {
            full.mul_vec(&phi_full)
        };
        if n > 1 {
            phi_stem = stem.mul_vec(&phi_stem);
        }
        let sum: f64 = (1..=n).map(|i| mg[i - 1] * gm[n - i]).sum();
        worst = worst.max((phi_full[state] - phi_stem[state] - sum).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Applicability {
    /// `h(x) < ∞` and `A ⊆ {g >= ε}` for some tested `ε`.
    pub eps_verdict: bool,
    #[serde(serialize_with = "ser_ext_opt")]
    pub epsilon: Option<f64>,
    #[serde(serialize_with = "ser_ext")]
    pub h_x: f64,
    /// `R^n m^n(x, A)` is below tolerance and eventually decreasing.
    /// Decided from finitely many iterates, so not a proof.
    pub extra_verdict: bool,
    pub extra_rigorous: bool,
    pub extra_last: f64,
    pub extra_n: usize,
}

/// Verdicts on the two sufficient conditions for the limit theorem.
pub fn check_limit_applicability(
    k: &AtomKernel,
    x: &Point,
    set: &SetDescriptor,
    big_r: f64,
) -> Result<Applicability> {
    applicability_with(k, x, set, big_r, DEFAULT_NMAX, DEFAULT_ORDER)
}

fn applicability_with(
    k: &AtomKernel,
    x: &Point,
    set: &SetDescriptor,
    big_r: f64,
    n_max: usize,
    order: usize,
) -> Result<Applicability> {
    let tol = k.tolerance();
    let state = k.space().state_of(x)?;
    let h_x = match compute_hs(k, big_r, order) {
        Ok(h) if h.tail_bound.is_finite() => h.h.values[k.space().state_node(state)],
        _ => f64::INFINITY,
    };
    let ind = k.space().indicator(set)?;
    let g_min = ind
        .iter()
        .zip(k.g_states())
        .filter(|(i, _)| **i > 0.0)
        .map(|(_, g)| *g)
        .fold(f64::INFINITY, f64::min);
    let epsilon = EPS_GRID.iter().copied().find(|&e| g_min >= e);
    let eps_verdict = h_x.is_finite() && h_x <= crate::invariant::EFFECTIVELY_INFINITE && epsilon.is_some();
    let trace = k.scaled_powers(Part::Stem, big_r, n_max, x, set)?;
    let last = *trace.last().unwrap();
    let floor = 64.0 * f64::EPSILON;
    let decreasing = trace[trace.len().saturating_sub(TRAILING_INCREMENTS + 1)..]
        .windows(2)
        .all(|w| w[1] <= w[0] + floor);
    Ok(Applicability {
        eps_verdict,
        epsilon,
        h_x,
        extra_verdict: last <= tol && decreasing,
        extra_rigorous: false,
        extra_last: last,
        extra_n: n_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitOptions {
    pub n_max: usize,
    /// Truncation order for the series.
    pub order: usize,
    /// Convergence tolerance on `|trace(n_max) - limit|`, relative to
    /// `max(1, limit)`. Defaults to the kernel tolerance on finite spaces
    /// and `1e-3` on grids.
    #[serde(serialize_with = "ser_ext_opt")]
    pub tol: Option<f64>,
    /// Allow periodic kernels and judge convergence on Cesàro means.
    pub cesaro: bool,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            n_max: DEFAULT_NMAX,
            order: DEFAULT_ORDER,
            tol: None,
            cesaro: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sensitivity {
    /// `|∂ limit / ∂R|` by central differences at `R(1 ± 1e-6)`.
    #[serde(serialize_with = "ser_ext_opt")]
    pub limit: Option<f64>,
    /// `|∂ R^{n_max} M^{n_max}(x, A) / ∂R|`.
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub x: Point,
    pub set: SetDescriptor,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub predicted_limit: f64,
    pub h_x: f64,
    pub pi_a: f64,
    /// `R² f'(R)`.
    pub scale: f64,
    /// `R^n M^n(x, A)` for `n = 1..=n_max`.
    pub trace: Vec<f64>,
    /// Running Cesàro means of the trace, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cesaro: Option<Vec<f64>>,
    pub converged: bool,
    pub tolerance: f64,
    pub applicability: Applicability,
    pub sensitivity: Sensitivity,
    pub spectral: SpectralReport,
    pub n_max: usize,
    pub order: usize,
}

impl LimitReport {
    pub fn final_value(&self) -> f64 {
        *self.trace.last().unwrap_or(&f64::NAN)
    }
}

/// `h(x) π(A) / (R² f'(R))` at `s`.
fn prediction(k: &AtomKernel, s: f64, state: usize, set: &SetDescriptor, order: usize) -> Result<(f64, f64, f64)> {
    let pair = subinvariant_pair(k, s, order)?;
    let h_x = pair.h.values[k.space().state_node(state)];
    let pi_a = pis_of_set(k, s, set, order)?;
    Ok((h_x, pi_a, pair.expected_hpi))
}

fn settled(trace: &[f64], target: f64, tol: f64) -> bool {
    let last = *trace.last().unwrap();
    let scale = target.abs().max(1.0);
    let close = (last - target).abs() <= tol * scale;
    let tail = &trace[trace.len().saturating_sub(TRAILING_INCREMENTS + 1)..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    close && hi - lo <= tol * scale
}

/// Trace of `R^n M^n(x, A)` against `h(x) π(A) / (R² f'(R))`.
pub fn perron_limit(
    k: &AtomKernel,
    x: &Point,
    set: &SetDescriptor,
    opts: LimitOptions,
) -> Result<LimitReport> {
    let spectral = classify(k, opts.order)?;
    match spectral.class {
        RecurrenceClass::RPositiveRecurrent => {}
        c => {
            return Err(Error::NotApplicable(format!(
                "the limit needs an R-positive recurrent kernel, found {c:?}"
            )))
        }
    }
    if spectral.period > 1 && !opts.cesaro {
        return Err(Error::Periodic {
            period: spectral.period,
        });
    }
    let big_r = spectral.big_r;
    let state = k.space().state_of(x)?;
    let (h_x, pi_a, scale) = prediction(k, big_r, state, set, opts.order)?;
    let predicted = h_x * pi_a / scale;
    let applicability = applicability_with(k, x, set, big_r, opts.n_max, opts.order)?;
    if !applicability.eps_verdict {
        if applicability.extra_verdict {
            warn!("limit applicability rests on the empirical verdict only");
        } else {
            warn!("neither applicability condition could be confirmed");
        }
    }
    let mut trace = k.scaled_powers(Part::Full, big_r, opts.n_max, x, set)?;
    trace.remove(0);
    let tol = opts.tol.unwrap_or(if k.space().is_finite() {
        k.tolerance().max(1e-6)
    } else {
        1e-3
    });
    let cesaro = (spectral.period > 1 || opts.cesaro).then(|| cesaro_means(&trace));
    let converged = match &cesaro {
        Some(c) if spectral.period > 1 => settled(c, predicted, tol),
        _ => settled(&trace, predicted, tol),
    };
    let up = big_r * (1.0 + SENSITIVITY_STEP);
    let down = big_r * (1.0 - SENSITIVITY_STEP);
    let limit_sens = match (
        prediction(k, up, state, set, opts.order),
        prediction(k, down, state, set, opts.order),
    ) {
        (Ok((hu, pu, su)), Ok((hd, pd, sd))) => {
            Some(((hu * pu / su) - (hd * pd / sd)).abs() / (up - down))
        }
        _ => None,
    };
    let n = opts.n_max as f64;
    let sensitivity = Sensitivity {
        limit: limit_sens,
        trace: n * trace.last().copied().unwrap_or(0.0).abs() / big_r,
    };
    Ok(LimitReport {
        x: *x,
        set: set.clone(),
        big_r,
        predicted_limit: predicted,
        h_x,
        pi_a,
        scale,
        trace,
        cesaro,
        converged,
        tolerance: tol,
        applicability,
        sensitivity,
        spectral,
        n_max: opts.n_max,
        order: opts.order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub x: Point,
    pub set: SetDescriptor,
    pub rho: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    /// `|R ρ - 1|`.
    pub r_rho_residual: f64,
    pub predicted_limit: f64,
    /// `v(x) u(A) / (u v)` from the eigenvectors.
    pub oracle_limit: f64,
    pub relative_error: f64,
    pub order: usize,
    pub iterations: usize,
}

/// Series prediction of `lim R^n M^n(x, A)` against the eigen oracle.
pub fn compare_with_oracle(
    k: &AtomKernel,
    x: &Point,
    set: &SetDescriptor,
    order: usize,
) -> Result<OracleComparison> {
    let oracle = power_iteration_oracle(k)?;
    let spectral = classify(k, order)?;
    let big_r = spectral.big_r;
    let state = k.space().state_of(x)?;
    let (h_x, pi_a, scale) = prediction(k, big_r, state, set, order)?;
    let predicted = h_x * pi_a / scale;
    let u = oracle.left.to_states(k.space())?;
    let v = &oracle.right.values;
    let ind = k.space().indicator(set)?;
    let oracle_limit = v[state] * dot(&u, &ind) / dot(&u, v);
    Ok(OracleComparison {
        x: *x,
        set: set.clone(),
        rho: oracle.rho,
        big_r,
        r_rho_residual: (big_r * oracle.rho - 1.0).abs(),
        predicted_limit: predicted,
        oracle_limit,
        relative_error: (predicted - oracle_limit).abs() / oracle_limit.abs().max(f64::MIN_POSITIVE),
        order,
        iterations: oracle.iterations,
    })
}

/// Running means `(1/n) Σ_{k<=n} c_k`.
pub fn cesaro_means(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            acc / (i + 1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_scalar() {
        let k = AtomKernel::dense(&[vec![2.0]], vec![1.0], vec![1.0]).unwrap();
        let o = power_iteration_oracle(&k).unwrap();
        assert!((o.rho - 2.0).abs() < 1e-12);
        assert_eq!(o.right.values, vec![1.0]);
    }

    #[test]
    fn oracle_refuses_periodic() {
        let k = AtomKernel::dense(&[vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 0.0], vec![0.0, 1.0])
            .unwrap();
        assert!(matches!(
            power_iteration_oracle(&k),
            Err(Error::Periodic { period: 2 })
        ));
    }

    #[test]
    fn oracle_two_by_two() {
        let k = AtomKernel::dense(
            &[vec![0.5, 0.5], vec![0.25, 0.75]],
            vec![0.2, 0.4],
            vec![0.5, 0.5],
        )
        .unwrap();
        let o = power_iteration_oracle(&k).unwrap();
        assert!((o.rho - 1.0).abs() < 1e-12);
        assert!((o.right.values[0] - 1.0).abs() < 1e-12 && (o.right.values[1] - 1.0).abs() < 1e-12);
        // left eigenvector ∝ (1/3, 2/3), max-normalized to (1/2, 1)
        assert!((o.left.atoms[0] - 0.5).abs() < 1e-12);
        assert!((o.left.atoms[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_atom_decomposition_is_exact() {
        let k = AtomKernel::pure_atom(vec![0.5, 1.0], vec![0.4, 0.6]).unwrap();
        let rep =
            resolvent_decomposition(&k, 1.0, &Point::Label(1), &SetDescriptor::Labels(vec![0]))
                .unwrap();
        assert!(rep.residual < 1e-12, "{rep:?}");
        // M_s = s δ + s² g γ / (1 - a s)
        let a = 0.8;
        let expected = 1.0 * 1.0 * 0.4 / (1.0 - a);
        assert!((rep.full_resolvent - expected).abs() < 1e-12);
    }

    #[test]
    fn pure_atom_limit_is_constant() {
        let k = AtomKernel::pure_atom(vec![0.5, 1.0], vec![0.4, 0.6]).unwrap();
        let a = 0.8;
        let set = SetDescriptor::Labels(vec![1]);
        let rep = perron_limit(&k, &Point::Label(0), &set, LimitOptions::default()).unwrap();
        let expected = 0.5 * 0.6 / a;
        assert!((rep.predicted_limit - expected).abs() < 1e-12);
        assert!(rep.trace.iter().all(|v| (v - expected).abs() < 1e-12));
        assert!(rep.converged);
    }

    #[test]
    fn cesaro_of_alternating() {
        let c = cesaro_means(&[2.0, 0.0, 2.0, 0.0]);
        assert_eq!(c, vec![2.0, 1.0, 4.0 / 3.0, 1.0]);
    }
}
