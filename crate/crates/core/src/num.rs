//! Small numeric helpers shared by the analysis modules.

use serde::Serializer;

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`
/// instead of JSON `null`.
pub fn ser_ext<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn ser_ext_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => ser_ext(v, s),
        None => s.serialize_none(),
    }
}

/// JSON value of `v` under [`ser_ext`].
pub fn ext_value(v: f64) -> serde_json::Value {
    ser_ext(&v, serde_json::value::Serializer).expect("f64 always serializes")
}

/// Root of an increasing function on `[lo, hi]` with `f(lo) < 0 <= f(hi)`,
/// by bisection until `|f| <= tol` or the bracket stops shrinking.
pub fn bisect_increasing(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut best = hi;
    let mut best_val = f64::INFINITY;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v.abs() < best_val {
            best = mid;
            best_val = v.abs();
        }
        if v.abs() <= tol {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Relative difference `|a - b| / max(|a|, |b|, tiny)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_square_root() {
        let r = bisect_increasing(0.0, 2.0, 1e-14, |x| x * x - 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn infinite_values_serialize_as_strings() {
        #[derive(serde::Serialize)]
        struct W(#[serde(serialize_with = "ser_ext")] f64);
        assert_eq!(serde_json::to_string(&W(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&W(1.5)).unwrap(), "1.5");
    }
}
