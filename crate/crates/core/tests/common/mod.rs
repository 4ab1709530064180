#![allow(dead_code)]

use kernelpf::analytic::AnalyticParams;
use kernelpf::sim::ScriptedLaw;
use kernelpf::AtomKernel;
use rand::Rng;

pub const SPLIT_P: [[f64; 2]; 2] = [[0.5, 0.5], [0.25, 0.75]];
pub const SPLIT_G: [f64; 2] = [0.2, 0.4];
pub const SPLIT_GAMMA: [f64; 2] = [0.5, 0.5];

pub fn split_chain_kernel() -> AtomKernel {
    let p: Vec<Vec<f64>> = SPLIT_P.iter().map(|r| r.to_vec()).collect();
    AtomKernel::dense(&p, SPLIT_G.to_vec(), SPLIT_GAMMA.to_vec()).unwrap()
}

pub fn analytic(a: f64, b: f64, c: f64) -> AnalyticParams {
    AnalyticParams::new(a, b, c).unwrap()
}

/// The acceptance discretization: `T = 20`, 400 nodes.
pub fn analytic_kernel(p: AnalyticParams) -> AtomKernel {
    AtomKernel::analytic_on(p, Some(20.0), 400).unwrap()
}

/// Dense kernel with the given strictly positive entries and an atom
/// `g ⊗ γ` scaled to fit under `M`: `γ ∝ weights`, `g(x) = u_x min_y M(x,y)/γ(y)`.
pub fn dense_from(entries: &[Vec<f64>], weights: &[f64], u: &[f64]) -> AtomKernel {
    let total: f64 = weights.iter().sum();
    let gamma: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let g: Vec<f64> = entries
        .iter()
        .zip(u)
        .map(|(row, u)| {
            let cap = row
                .iter()
                .zip(&gamma)
                .map(|(m, c)| m / c)
                .fold(f64::INFINITY, f64::min);
            u * cap
        })
        .collect();
    AtomKernel::dense(entries, g, gamma).unwrap()
}

/// Random irreducible aperiodic kernel of size `n` with U(0,1) entries.
pub fn random_dense(rng: &mut impl Rng, n: usize) -> AtomKernel {
    let entries: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(0.01..1.0)).collect())
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
    dense_from(&entries, &weights, &u)
}

/// A small scripted genealogy: an initial cluster of
/// three, `X = (3, 2, 2, 0, 2, 1)`, extinct at `L = 6`.
pub fn scripted_genealogy() -> ScriptedLaw {
    ScriptedLaw {
        roots: vec![0, 1, 2],
        table: vec![
            (vec![3], 1),
            (vec![4], 1),
            (vec![], 1),
            (vec![5], 1),
            (vec![6], 1),
            (vec![7], 2),
            (vec![], 0),
            (vec![8, 9], 0),
            (vec![10], 1),
            (vec![], 1),
            (vec![], 1),
        ],
    }
}

/// Rank-one stem on state 0 (`a₁ = 2`) and an atom on states 1, 2
/// (`a = 0.5`); all cross integrals vanish.
pub fn rank_one_kernel() -> AtomKernel {
    AtomKernel::rank_one(
        vec![2.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 0.5, 0.5],
        vec![0.0, 0.5, 0.5],
    )
    .unwrap()
}
