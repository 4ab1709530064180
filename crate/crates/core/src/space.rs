//! Type spaces, measures and functions on them.
//!
//! Every space is reduced to a finite list of *states* on which kernels act
//! as matrices. A finite space has one state per label. A grid on `[0, T]`
//! has one state per quadrature node followed by one state per point mass;
//! a point-mass state shares its location with a node, so functions take the
//! node's value there, while measures keep atom masses apart from the density
//! so that interval masses can be integrated with boundary-aware weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when snapping a location onto a grid node.
const SNAP_TOL: f64 = 1e-9;

/// Smallest sub-range (in intervals) that gets the end-corrected rule.
const MIN_CORRECTED_INTERVALS: usize = 5;

/// End weights of the fourth-order corrected trapezoid rule.
const END_CORRECTION: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    /// Composite trapezoid on the node list as given.
    Trapezoid,
    /// Nodes `T * expm1(alpha u) / expm1(alpha)` on a uniform `u` grid,
    /// integrated with the end-corrected trapezoid rule in `u`.
    Graded { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    upper: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    point_masses: Vec<f64>,
    point_nodes: Vec<usize>,
    rule: GridRule,
}

impl Grid {
    /// Graded grid of `n` nodes on `[0, upper]`; `alpha = 0` is uniform.
    pub fn graded(upper: f64, n: usize, alpha: f64, point_masses: Vec<f64>) -> Result<Self> {
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::InvalidSpace(format!("upper bound {upper} must be positive")));
        }
        if n < 2 {
            return Err(Error::InvalidSpace("a grid needs at least two nodes".into()));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidSpace(format!("grading {alpha} must be >= 0")));
        }
        let nodes: Vec<f64> = (0..n)
            .map(|k| {
                let u = k as f64 / (n - 1) as f64;
                if alpha == 0.0 {
                    upper * u
                } else {
                    upper * (alpha * u).exp_m1() / alpha.exp_m1()
                }
            })
            .collect();
        let mut grid = Grid {
            upper,
            nodes,
            weights: Vec::new(),
            point_masses: Vec::new(),
            point_nodes: Vec::new(),
            rule: GridRule::Graded { alpha },
        };
        grid.weights = grid.rule_weights(0, n - 1);
        grid.attach_point_masses(point_masses)?;
        Ok(grid)
    }

    /// Grid from an explicit node list. Missing weights default to the
    /// composite trapezoid rule.
    pub fn from_nodes(
        upper: f64,
        nodes: Vec<f64>,
        weights: Option<Vec<f64>>,
        point_masses: Vec<f64>,
    ) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidSpace("a grid needs at least two nodes".into()));
        }
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidSpace(format!("upper bound {upper} must be positive")));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSpace("nodes must be strictly increasing".into()));
            }
        }
        if nodes[0] < 0.0 || *nodes.last().unwrap() > upper {
            return Err(Error::InvalidSpace(format!("nodes must lie in [0, {upper}]")));
        }
        let mut grid = Grid {
            upper,
            nodes,
            weights: Vec::new(),
            point_masses: Vec::new(),
            point_nodes: Vec::new(),
            rule: GridRule::Trapezoid,
        };
        grid.weights = match weights {
            Some(w) => {
                if w.len() != grid.nodes.len() {
                    return Err(Error::DimensionMismatch {
                        expected: grid.nodes.len(),
                        found: w.len(),
                    });
                }
                if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidSpace("weights must be finite and >= 0".into()));
                }
                w
            }
            None => grid.rule_weights(0, grid.nodes.len() - 1),
        };
        grid.attach_point_masses(point_masses)?;
        Ok(grid)
    }

    fn attach_point_masses(&mut self, point_masses: Vec<f64>) -> Result<()> {
        let mut point_nodes = Vec::with_capacity(point_masses.len());
        for &p in &point_masses {
            if !(0.0..=self.upper).contains(&p) {
                return Err(Error::InvalidSpace(format!(
                    "point mass at {p} outside [0, {}]",
                    self.upper
                )));
            }
            let j = self.snap(p).ok_or_else(|| {
                Error::InvalidSpace(format!("point mass at {p} does not coincide with a node"))
            })?;
            point_nodes.push(j);
        }
        self.point_masses = point_masses;
        self.point_nodes = point_nodes;
        Ok(())
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point_masses(&self) -> &[f64] {
        &self.point_masses
    }

    /// Node index of each point mass.
    pub fn point_nodes(&self) -> &[usize] {
        &self.point_nodes
    }

    pub fn rule(&self) -> &GridRule {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node at `x`, if any.
    pub fn snap(&self, x: f64) -> Option<usize> {
        let tol = SNAP_TOL * x.abs().max(1.0);
        let j = self.nodes.partition_point(|&v| v < x - tol);
        (j < self.nodes.len() && (self.nodes[j] - x).abs() <= tol).then_some(j)
    }

    /// Quadrature weights for integrating over `[nodes[lo], nodes[hi]]`.
    pub fn rule_weights(&self, lo: usize, hi: usize) -> Vec<f64> {
        assert!(lo <= hi && hi < self.nodes.len());
        let k = hi - lo;
        let mut w = vec![0.0; k + 1];
        if k == 0 {
            return w;
        }
        match self.rule {
            GridRule::Trapezoid => {
                for i in 0..k {
                    let h = self.nodes[lo + i + 1] - self.nodes[lo + i];
                    w[i] += 0.5 * h;
                    w[i + 1] += 0.5 * h;
                }
            }
            GridRule::Graded { alpha } => {
                let n = self.nodes.len();
                let du = 1.0 / (n - 1) as f64;
                let base = corrected_weights(k);
                for (i, wi) in w.iter_mut().enumerate() {
                    let u = (lo + i) as f64 * du;
                    *wi = base[i] * du * jacobian(self.upper, alpha, u);
                }
            }
        }
        w
    }

    /// Sparse weights for `∫_{nodes[lo]}^{t} φ(y) dy` given `φ` at nodes.
    /// The piece past the last node inside the interval uses linear
    /// interpolation. Empty when `t < nodes[lo]`.
    pub fn interval_weights(&self, lo: usize, t: f64) -> Vec<(usize, f64)> {
        let n = self.nodes.len();
        if t < self.nodes[lo] - SNAP_TOL * self.nodes[lo].abs().max(1.0) {
            return Vec::new();
        }
        let hi = match self.snap(t) {
            Some(j) => j,
            None => self.nodes.partition_point(|&v| v <= t).saturating_sub(1),
        }
        .max(lo);
        let mut out: Vec<(usize, f64)> = self
            .rule_weights(lo, hi)
            .into_iter()
            .enumerate()
            .map(|(i, w)| (lo + i, w))
            .collect();
        let tail = t - self.nodes[hi];
        if hi + 1 < n && tail > SNAP_TOL * t.abs().max(1.0) {
            let span = self.nodes[hi + 1] - self.nodes[hi];
            let theta = (tail / span).min(1.0);
            out.last_mut().unwrap().1 += 0.5 * tail * (2.0 - theta);
            out.push((hi + 1, 0.5 * tail * theta));
        }
        out
    }
}

/// Fourth-order end-corrected trapezoid weights on `k` unit intervals.
fn corrected_weights(k: usize) -> Vec<f64> {
    let mut w = vec![1.0; k + 1];
    if k >= MIN_CORRECTED_INTERVALS {
        for (i, &c) in END_CORRECTION.iter().enumerate() {
            w[i] = c;
            w[k - i] = c;
        }
    } else {
        w[0] = 0.5;
        w[k] = 0.5;
    }
    w
}

fn jacobian(upper: f64, alpha: f64, u: f64) -> f64 {
    if alpha == 0.0 {
        upper
    } else {
        upper * alpha * (alpha * u).exp() / alpha.exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeSpace {
    Finite { labels: Vec<String> },
    Grid(Grid),
}

impl TypeSpace {
    pub fn finite(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSpace("finite space needs at least one label".into()));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidSpace("labels must be distinct".into()));
        }
        Ok(TypeSpace::Finite { labels })
    }

    /// Finite space labelled `0..n`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::finite((0..n).map(|i| i.to_string()).collect())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, TypeSpace::Finite { .. })
    }

    pub fn grid(&self) -> Option<&Grid> {
        match self {
            TypeSpace::Grid(g) => Some(g),
            TypeSpace::Finite { .. } => None,
        }
    }

    /// Number of values a [`TypeFunction`] carries.
    pub fn points(&self) -> usize {
        match self {
            TypeSpace::Finite { labels } => labels.len(),
            TypeSpace::Grid(g) => g.len(),
        }
    }

    /// Number of atoms a [`Measure`] carries.
    pub fn atoms(&self) -> usize {
        match self {
            TypeSpace::Finite { labels } => labels.len(),
            TypeSpace::Grid(g) => g.point_masses.len(),
        }
    }

    /// Number of density values a [`Measure`] carries.
    pub fn density_len(&self) -> usize {
        match self {
            TypeSpace::Finite { .. } => 0,
            TypeSpace::Grid(g) => g.len(),
        }
    }

    /// Size of the discrete state space kernels act on.
    pub fn states(&self) -> usize {
        match self {
            TypeSpace::Finite { labels } => labels.len(),
            TypeSpace::Grid(g) => g.len() + g.point_masses.len(),
        }
    }

    /// State index of a point.
    pub fn state_of(&self, point: &Point) -> Result<usize> {
        match (self, point) {
            (TypeSpace::Finite { labels }, Point::Label(i)) if *i < labels.len() => Ok(*i),
            (TypeSpace::Grid(g), Point::At(x)) => g
                .snap(*x)
                .ok_or_else(|| Error::UnrepresentablePoint(format!("{x} is not a grid node"))),
            (_, p) => Err(Error::UnrepresentablePoint(format!("{p:?}"))),
        }
    }

    /// Location (or label index) of each state.
    pub fn state_locations(&self) -> Vec<f64> {
        match self {
            TypeSpace::Finite { labels } => (0..labels.len()).map(|i| i as f64).collect(),
            TypeSpace::Grid(g) => g
                .nodes
                .iter()
                .copied()
                .chain(g.point_masses.iter().copied())
                .collect(),
        }
    }

    /// Node index a state evaluates functions at.
    pub(crate) fn state_node(&self, state: usize) -> usize {
        match self {
            TypeSpace::Finite { .. } => state,
            TypeSpace::Grid(g) => {
                if state < g.len() {
                    state
                } else {
                    g.point_nodes[state - g.len()]
                }
            }
        }
    }

    /// Indicator of `A` over states, i.e. `δ_x(A)` for every state `x`.
    pub fn indicator(&self, set: &SetDescriptor) -> Result<Vec<f64>> {
        self.check_set(set)?;
        Ok(self
            .state_locations()
            .iter()
            .enumerate()
            .map(|(k, &x)| match set {
                SetDescriptor::Whole => 1.0,
                SetDescriptor::Labels(l) => f64::from(u8::from(l.contains(&k))),
                SetDescriptor::Interval(t) => f64::from(u8::from(x <= *t)),
            })
            .collect())
    }

    pub fn check_set(&self, set: &SetDescriptor) -> Result<()> {
        match (self, set) {
            (_, SetDescriptor::Whole) => Ok(()),
            (TypeSpace::Finite { labels }, SetDescriptor::Labels(l)) => {
                match l.iter().find(|&&i| i >= labels.len()) {
                    Some(i) => Err(Error::UnrepresentableSet(format!("label index {i}"))),
                    None => Ok(()),
                }
            }
            (TypeSpace::Grid(_), SetDescriptor::Interval(t)) if *t >= 0.0 => Ok(()),
            (_, s) => Err(Error::UnrepresentableSet(format!("{s:?}"))),
        }
    }
}

/// A type: a label index on a finite space, a location on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Point {
    Label(usize),
    At(f64),
}

/// Measurable sets the library can evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetDescriptor {
    /// A subset of labels of a finite space.
    Labels(Vec<usize>),
    /// The interval `[0, t]`.
    Interval(f64),
    /// The whole space.
    Whole,
}

/// Non-negative function on a type space: one value per label or node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeFunction {
    pub values: Vec<f64>,
}

impl TypeFunction {
    pub fn new(values: Vec<f64>) -> Self {
        TypeFunction { values }
    }

    pub fn from_fn(space: &TypeSpace, f: impl Fn(f64) -> f64) -> Self {
        let values = match space {
            TypeSpace::Finite { labels } => (0..labels.len()).map(|i| f(i as f64)).collect(),
            TypeSpace::Grid(g) => g.nodes.iter().map(|&x| f(x)).collect(),
        };
        TypeFunction { values }
    }

    pub fn check(&self, space: &TypeSpace) -> Result<()> {
        if self.values.len() != space.points() {
            return Err(Error::DimensionMismatch {
                expected: space.points(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn at(&self, space: &TypeSpace, point: &Point) -> Result<f64> {
        self.check(space)?;
        Ok(self.values[space.state_node(space.state_of(point)?)])
    }

    pub(crate) fn to_states(&self, space: &TypeSpace) -> Result<Vec<f64>> {
        self.check(space)?;
        Ok((0..space.states())
            .map(|k| self.values[space.state_node(k)])
            .collect())
    }

    pub(crate) fn from_states(space: &TypeSpace, states: &[f64]) -> Self {
        TypeFunction {
            values: states[..space.points()].to_vec(),
        }
    }
}

/// σ-finite measure on a type space, stored as a density over grid nodes
/// plus atom masses (every label of a finite space is an atom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub density: Vec<f64>,
    pub atoms: Vec<f64>,
}

impl Measure {
    pub fn new(density: Vec<f64>, atoms: Vec<f64>) -> Self {
        Measure { density, atoms }
    }

    pub fn zero(space: &TypeSpace) -> Self {
        Measure {
            density: vec![0.0; space.density_len()],
            atoms: vec![0.0; space.atoms()],
        }
    }

    /// Purely atomic measure on a finite space.
    pub fn atomic(masses: Vec<f64>) -> Self {
        Measure {
            density: Vec::new(),
            atoms: masses,
        }
    }

    /// Unit mass at `point`. On a grid this is an atom when the point is a
    /// declared point mass, and otherwise a one-node spike of the density.
    pub fn dirac(space: &TypeSpace, point: &Point) -> Result<Self> {
        let state = space.state_of(point)?;
        let mut m = Measure::zero(space);
        match space {
            TypeSpace::Finite { .. } => m.atoms[state] = 1.0,
            TypeSpace::Grid(g) => match g.point_nodes.iter().position(|&j| j == state) {
                Some(p) => m.atoms[p] = 1.0,
                None => {
                    let w = g.weights[state];
                    if w <= 0.0 {
                        return Err(Error::UnrepresentablePoint(format!(
                            "node {state} has zero quadrature weight"
                        )));
                    }
                    m.density[state] = 1.0 / w;
                }
            },
        }
        Ok(m)
    }

    pub fn check(&self, space: &TypeSpace) -> Result<()> {
        if self.density.len() != space.density_len() {
            return Err(Error::DimensionMismatch {
                expected: space.density_len(),
                found: self.density.len(),
            });
        }
        if self.atoms.len() != space.atoms() {
            return Err(Error::DimensionMismatch {
                expected: space.atoms(),
                found: self.atoms.len(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Measure {
            density: self.density.iter().map(|v| v * k).collect(),
            atoms: self.atoms.iter().map(|v| v * k).collect(),
        }
    }

    /// Mass carried by each state.
    pub(crate) fn to_states(&self, space: &TypeSpace) -> Result<Vec<f64>> {
        self.check(space)?;
        Ok(match space {
            TypeSpace::Finite { .. } => self.atoms.clone(),
            TypeSpace::Grid(g) => self
                .density
                .iter()
                .zip(&g.weights)
                .map(|(d, w)| d * w)
                .chain(self.atoms.iter().copied())
                .collect(),
        })
    }

    pub(crate) fn from_states(space: &TypeSpace, mass: &[f64]) -> Self {
        match space {
            TypeSpace::Finite { .. } => Measure::atomic(mass.to_vec()),
            TypeSpace::Grid(g) => {
                let n = g.len();
                let density = mass[..n]
                    .iter()
                    .zip(&g.weights)
                    .map(|(m, &w)| if w > 0.0 { m / w } else { 0.0 })
                    .collect();
                Measure::new(density, mass[n..].to_vec())
            }
        }
    }

    pub fn total_mass(&self, space: &TypeSpace) -> Result<f64> {
        Ok(self.to_states(space)?.iter().sum())
    }

    /// `∫ h dμ`.
    pub fn integrate(&self, space: &TypeSpace, h: &TypeFunction) -> Result<f64> {
        let mass = self.to_states(space)?;
        let vals = h.to_states(space)?;
        Ok(mass.iter().zip(&vals).map(|(m, v)| m * v).sum())
    }

    /// `μ(A)`, integrating the density with weights restricted to `A`.
    pub fn of_set(&self, space: &TypeSpace, set: &SetDescriptor) -> Result<f64> {
        self.check(space)?;
        space.check_set(set)?;
        match (space, set) {
            (_, SetDescriptor::Whole) => self.total_mass(space),
            (TypeSpace::Finite { .. }, SetDescriptor::Labels(l)) => {
                Ok(l.iter().map(|&i| self.atoms[i]).sum())
            }
            (TypeSpace::Grid(g), SetDescriptor::Interval(t)) => {
                let dens: f64 = g
                    .interval_weights(0, *t)
                    .into_iter()
                    .map(|(j, w)| w * self.density[j])
                    .sum();
                let atoms: f64 = g
                    .point_masses
                    .iter()
                    .zip(&self.atoms)
                    .filter(|(&p, _)| p <= *t)
                    .map(|(_, m)| m)
                    .sum();
                Ok(dens + atoms)
            }
            _ => unreachable!("checked by check_set"),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.density.iter().chain(&self.atoms).all(|&v| v >= 0.0)
    }
}
