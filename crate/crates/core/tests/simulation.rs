mod common;

use common::{SPLIT_G, SPLIT_GAMMA, SPLIT_P};
use kernelpf::sim::{
    build_preset, chi_square_gof, estimate_series_with, regeneration_times, sample_records, Estimate,
    PresetParams,
};
use kernelpf::spectral::{compute_Fn, compute_fn};

/// `[γ m^{n-1} g]_{n=1..=n_max}` by plain vector iteration.
fn cluster_means(m: &[Vec<f64>], g: &[f64], gamma: &[f64], n_max: usize) -> Vec<f64> {
    let mut v = g.to_vec();
    let mut out = Vec::new();
    for _ in 0..n_max {
        out.push(gamma.iter().zip(&v).map(|(a, b)| a * b).sum());
        v = m.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
    }
    out
}

fn plus_atom(m: &[Vec<f64>], g: &[f64], gamma: &[f64]) -> Vec<Vec<f64>> {
    m.iter()
        .zip(g)
        .map(|(row, gx)| row.iter().zip(gamma).map(|(v, c)| v + gx * c).collect())
        .collect()
}

fn assert_within_3se(est: &[Estimate], expected: &[f64], what: &str) {
    for (e, &x) in est.iter().zip(expected) {
        let z = (e.mean - x) / e.se.max(1e-12);
        assert!(z.abs() <= 3.0, "{what}_{}: {} ± {} vs {x} (z {z:.2})", e.n, e.mean, e.se);
    }
}

#[test]
fn split_chain_means() {
    let stem: Vec<Vec<f64>> = SPLIT_P
        .iter()
        .zip(SPLIT_G)
        .map(|(row, gx)| row.iter().zip(SPLIT_GAMMA).map(|(p, c)| p - gx * c).collect())
        .collect();
    let full: Vec<Vec<f64>> = SPLIT_P.iter().map(|r| r.to_vec()).collect();
    let preset = build_preset(PresetParams::default_for("split-chain").unwrap()).unwrap();
    let batch = estimate_series_with(preset.laws(), 20_000, 6, 11, 4).unwrap();
    assert_within_3se(&batch.f_hat, &cluster_means(&stem, &SPLIT_G, &SPLIT_GAMMA, 6), "f");
    assert_within_3se(&batch.big_f_hat, &cluster_means(&full, &SPLIT_G, &SPLIT_GAMMA, 6), "F");
}

#[test]
fn linear_fractional_means() {
    let params = PresetParams::default_for("linear-fractional").unwrap();
    let PresetParams::LinearFractional { q, mean_n, gamma } = params.clone() else {
        unreachable!()
    };
    let g: Vec<f64> = q.iter().map(|row| mean_n * row.iter().sum::<f64>()).collect();
    let preset = build_preset(params).unwrap();
    let batch = estimate_series_with(preset.laws(), 20_000, 5, 12, 4).unwrap();
    assert_within_3se(&batch.f_hat, &cluster_means(&q, &g, &gamma, 5), "f");
    assert_within_3se(&batch.big_f_hat, &cluster_means(&plus_atom(&q, &g, &gamma), &g, &gamma, 5), "F");
}

#[test]
fn pure_atom_means_are_powers() {
    let preset = build_preset(PresetParams::default_for("pure-atom").unwrap()).unwrap();
    // a = ∫ g dγ = 0.5 * 0.4 + 1.0 * 0.6
    let a: f64 = 0.8;
    let batch = estimate_series_with(preset.laws(), 20_000, 5, 13, 4).unwrap();
    let f: Vec<f64> = (1..=5).map(|n| if n == 1 { a } else { 0.0 }).collect();
    let big_f: Vec<f64> = (1..=5).map(|n| a.powi(n)).collect();
    assert_within_3se(&batch.f_hat[..1], &f[..1], "f");
    assert!(batch.f_hat[1..].iter().all(|e| e.mean == 0.0));
    assert_within_3se(&batch.big_f_hat, &big_f, "F");
}

#[test]
fn analytic_means_match_the_grid_kernel() {
    let preset = build_preset(PresetParams::default_for("analytic-example").unwrap()).unwrap();
    let f = compute_fn(&preset.kernel, 4).unwrap();
    let big_f = compute_Fn(&preset.kernel, 4).unwrap();
    let batch = estimate_series_with(preset.laws(), 40_000, 4, 14, 4).unwrap();
    assert_within_3se(&batch.f_hat, &f.coeffs()[1..], "f");
    assert_within_3se(&batch.big_f_hat, &big_f.coeffs()[1..], "F");
}

#[test]
fn split_chain_gaps_follow_f() {
    let preset = build_preset(PresetParams::default_for("split-chain").unwrap()).unwrap();
    let records = sample_records(preset.laws(), 20_000, 200, 15).unwrap();
    let sample = regeneration_times(&records).unwrap();
    // R = 1 for a stochastic P, so P(gap = n) = f_n
    let f = compute_fn(&preset.kernel, 60).unwrap();
    let gof = chi_square_gof(&sample.gaps, sample.censored, &f.coeffs()[1..]).unwrap();
    assert!(gof.p_value > 0.01, "{gof:?}");
}

#[test]
fn chi_square_rejects_a_wrong_law() {
    let preset = build_preset(PresetParams::default_for("split-chain").unwrap()).unwrap();
    let records = sample_records(preset.laws(), 20_000, 200, 16).unwrap();
    let sample = regeneration_times(&records).unwrap();
    let geometric: Vec<f64> = (1..=60).map(|n| 0.5f64.powi(n)).collect();
    let gof = chi_square_gof(&sample.gaps, sample.censored, &geometric).unwrap();
    assert!(gof.p_value < 1e-6);
}

#[test]
fn non_split_records_are_rejected() {
    let preset = build_preset(PresetParams::default_for("pure-atom").unwrap()).unwrap();
    let records = sample_records(preset.laws(), 200, 10, 17).unwrap();
    assert!(regeneration_times(&records).is_err());
}
