//! Reachability structure of finite kernels: irreducibility and period.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{AtomKernel, Part};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Periodicity {
    pub period: usize,
    /// Cyclic classes `D_0, ..., D_{d-1}`; mass from `D_i` flows only
    /// into `D_{i+1 mod d}`.
    pub classes: Vec<Vec<usize>>,
}

fn finite_matrix(k: &AtomKernel) -> Result<&Matrix> {
    if !k.space().is_finite() {
        return Err(Error::UnsupportedVariant(k.variant().name()));
    }
    Ok(k.matrix(Part::Full))
}

fn successors(m: &Matrix, i: usize) -> impl Iterator<Item = usize> + '_ {
    m.row(i)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(j, _)| j)
}

/// BFS distances from `start`, following edges forward or backward.
fn bfs(m: &Matrix, start: usize, forward: bool) -> Vec<Option<usize>> {
    let n = m.rows();
    let mut dist = vec![None; n];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        let d = dist[i].unwrap();
        let next: Vec<usize> = if forward {
            successors(m, i).collect()
        } else {
            (0..n).filter(|&j| m[(j, i)] > 0.0).collect()
        };
        for j in next {
            if dist[j].is_none() {
                dist[j] = Some(d + 1);
                queue.push_back(j);
            }
        }
    }
    dist
}

pub fn matrix_is_irreducible(m: &Matrix) -> bool {
    bfs(m, 0, true).iter().all(Option::is_some) && bfs(m, 0, false).iter().all(Option::is_some)
}

/// Whether the graph with an edge `i → j` iff `M(i, {j}) > 0` is strongly
/// connected.
pub fn check_irreducible(k: &AtomKernel) -> Result<bool> {
    Ok(matrix_is_irreducible(finite_matrix(k)?))
}

pub fn matrix_period(m: &Matrix) -> Result<Periodicity> {
    if !matrix_is_irreducible(m) {
        return Err(Error::Reducible);
    }
    let level: Vec<usize> = bfs(m, 0, true).into_iter().map(Option::unwrap).collect();
    let mut d = 0usize;
    for i in 0..m.rows() {
        for j in successors(m, i) {
            d = gcd(d, (level[i] + 1).abs_diff(level[j]));
        }
    }
    // a single state without a loop is excluded by irreducibility
    let d = d.max(1);
    let mut classes = vec![Vec::new(); d];
    for (i, l) in level.iter().enumerate() {
        classes[l % d].push(i);
    }
    Ok(Periodicity { period: d, classes })
}

/// Period and cyclic classes of a finite irreducible kernel.
pub fn detect_period(k: &AtomKernel) -> Result<Periodicity> {
    matrix_period(finite_matrix(k)?)
}

pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn irreducibility_examples() {
        assert!(matrix_is_irreducible(&m(&[vec![0.0, 1.0], vec![1.0, 0.0]])));
        assert!(!matrix_is_irreducible(&m(&[vec![1.0, 0.0], vec![0.0, 1.0]])));
        assert!(!matrix_is_irreducible(&m(&[vec![0.0, 1.0], vec![0.0, 1.0]])));
    }

    #[test]
    fn period_examples() {
        let p = matrix_period(&m(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!(p.period, 2);
        assert_eq!(p.classes, vec![vec![0], vec![1]]);
        assert_eq!(matrix_period(&m(&[vec![1.0, 1.0], vec![1.0, 1.0]])).unwrap().period, 1);
        let cycle = m(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ]);
        assert_eq!(matrix_period(&cycle).unwrap().period, 3);
        assert!(matches!(
            matrix_period(&m(&[vec![1.0, 0.0], vec![0.0, 1.0]])),
            Err(Error::Reducible)
        ));
    }

    #[test]
    fn cycles_of_two_and_three_are_aperiodic() {
        // 0 → 1 → 0 and 0 → 1 → 2 → 0
        let a = m(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ]);
        assert_eq!(matrix_period(&a).unwrap().period, 1);
    }

    #[test]
    fn grid_kernels_are_unsupported() {
        let p = crate::analytic::AnalyticParams::new(2.0, 2.0, 0.2).unwrap();
        let k = AtomKernel::analytic_on(p, Some(5.0), 20).unwrap();
        assert!(matches!(check_irreducible(&k), Err(Error::UnsupportedVariant(_))));
    }
}
