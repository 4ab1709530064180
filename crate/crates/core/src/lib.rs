//! Perron-Frobenius analysis of non-negative kernels with an atom.
//!
//! A kernel `M(x, A) = m(x, A) + g(x) γ(A)` is analysed through the
//! generating functions of its cluster counts: `f` (through the stem `m`)
//! and `F = f / (1 - f)` (through `M`). From these the crate derives the
//! convergence parameter `R`, the recurrence class, the `R`-invariant pair
//! `(h, π)` and the limit of `R^n M^n(x, A)`, and checks them against
//! eigen-analysis, closed forms and Monte Carlo simulation of branching
//! processes with clusters.

// `!(a < b)` comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod graph;
pub mod io;
pub mod invariant;
pub mod kernel;
pub mod linalg;
pub mod num;
pub mod series;
pub mod sim;
pub mod space;
pub mod spectral;

pub use error::{Error, Result};
pub use kernel::{AtomKernel, KernelVariant, Part, Support, Tolerances};
pub use space::{Grid, GridRule, Measure, Point, SetDescriptor, TypeFunction, TypeSpace};
