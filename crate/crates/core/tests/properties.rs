#![allow(clippy::needless_range_loop)]

mod common;

use common::{dense_from, split_chain_kernel};
use kernelpf::asymptotics::{coefficient_decomposition_residual, compare_with_oracle};
use kernelpf::series::PowerSeries;
use kernelpf::sim::presets::{build_preset, PresetParams};
use kernelpf::sim::estimate_series_with;
use kernelpf::spectral::{classify, compute_Fn, compute_fn};
use kernelpf::{AtomKernel, Point, SetDescriptor};
use proptest::prelude::*;

/// Entries, atom weights and atom fill fractions for a kernel of size 2..=5.
fn kernel_inputs() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n),
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(0.1f64..0.9, n),
        )
    })
}

fn kernel() -> impl Strategy<Value = (Vec<Vec<f64>>, AtomKernel)> {
    kernel_inputs().prop_map(|(m, w, u)| {
        let k = dense_from(&m, &w, &u);
        (m, k)
    })
}

fn naive_power(m: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut p: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _ in 0..n {
        p = (0..d)
            .map(|i| (0..d).map(|j| (0..d).map(|l| p[i][l] * m[l][j]).sum()).collect())
            .collect();
    }
    p
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterates_match_matrix_powers((m, k) in kernel(), n in 1usize..12) {
        let d = m.len();
        let p = naive_power(&m, n);
        for x in 0..d {
            for y in 0..d {
                let got = k.iterate_kernel(n, &Point::Label(x), &SetDescriptor::Labels(vec![y])).unwrap();
                prop_assert!(rel(got, p[x][y]) < 1e-12, "M^{n}({x},{y}) = {got} vs {}", p[x][y]);
            }
        }
    }

    #[test]
    fn semigroup((_m, k) in kernel(), a in 1usize..8, b in 1usize..8) {
        let d = k.states();
        let set = SetDescriptor::Labels(vec![0]);
        let lhs = k.iterate_kernel(a + b, &Point::Label(0), &set).unwrap();
        let rhs: f64 = (0..d)
            .map(|y| {
                k.iterate_kernel(a, &Point::Label(0), &SetDescriptor::Labels(vec![y])).unwrap()
                    * k.iterate_kernel(b, &Point::Label(y), &set).unwrap()
            })
            .sum();
        prop_assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn renewal_identity((_m, k) in kernel()) {
        let n = 40;
        let f = compute_fn(&k, n).unwrap();
        let big_f = compute_Fn(&k, n).unwrap();
        let f_times = f.convolve(&big_f);
        for i in 1..=n {
            let lhs = big_f.coeff(i);
            let rhs = f.coeff(i) + f_times.coeff(i);
            prop_assert!(rel(lhs, rhs) < 1e-10, "n = {i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn atom_rescaling_leaves_f_and_r_unchanged((_m, k) in kernel(), kappa in 0.1f64..10.0) {
        let scaled = k.rescale_atom(kappa).unwrap();
        let a = compute_fn(&k, 60).unwrap();
        let b = compute_fn(&scaled, 60).unwrap();
        for i in 1..=60 {
            prop_assert!(rel(a.coeff(i), b.coeff(i)) < 1e-10);
        }
        let ra = classify(&k, 400).unwrap().big_r;
        let rb = classify(&scaled, 400).unwrap().big_r;
        prop_assert!(rel(ra, rb) < 1e-9);
    }

    #[test]
    fn coefficient_decomposition_holds((_m, k) in kernel(), x in 0usize..5) {
        let x = x % k.states();
        let r = coefficient_decomposition_residual(&k, 10, &Point::Label(x), &SetDescriptor::Whole).unwrap();
        let scale = k.iterate_kernel(10, &Point::Label(x), &SetDescriptor::Whole).unwrap().max(1.0);
        prop_assert!(r <= 1e-12 * scale, "residual {r}");
    }

    #[test]
    fn convergence_parameter_inverts_spectral_radius((_m, k) in kernel()) {
        let c = compare_with_oracle(&k, &Point::Label(0), &SetDescriptor::Whole, 2000).unwrap();
        prop_assert!(c.r_rho_residual < 1e-9, "|R rho - 1| = {}", c.r_rho_residual);
        prop_assert!(c.relative_error < 1e-6, "limit error {}", c.relative_error);
    }

    #[test]
    fn f_is_increasing(coeffs in prop::collection::vec(0.0f64..1.0, 2..30), s in 0.0f64..0.5, ds in 0.001f64..0.4) {
        let p = PowerSeries::new(coeffs).unwrap();
        prop_assert!(p.partial_sum(s) <= p.partial_sum(s + ds));
    }

    #[test]
    fn classification_is_consistent((_m, k) in kernel()) {
        let rep = classify(&k, 2000).unwrap();
        prop_assert!(rep.big_r <= rep.r * (1.0 + 1e-12));
        // finite irreducible kernels are always R-recurrent
        prop_assert!(rep.is_recurrent());
        prop_assert!((rep.f_big_r - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_is_seed_deterministic(seed in any::<u64>()) {
        let preset = build_preset(PresetParams::default_for("split-chain").unwrap()).unwrap();
        let a = estimate_series_with(preset.laws(), 200, 6, seed, 1).unwrap();
        let b = estimate_series_with(preset.laws(), 200, 6, seed, 3).unwrap();
        prop_assert_eq!(a.f_hat, b.f_hat);
        prop_assert_eq!(a.big_f_hat, b.big_f_hat);
        prop_assert_eq!(a.w_trajectories, b.w_trajectories);
    }
}

#[test]
fn split_chain_f_sums_to_one() {
    let k = split_chain_kernel();
    let f = compute_fn(&k, 400).unwrap();
    assert!((f.partial_sum(1.0) - 1.0).abs() < 1e-12);
    let rep = classify(&k, 400).unwrap();
    assert!((rep.big_r - 1.0).abs() < 1e-9);
}
