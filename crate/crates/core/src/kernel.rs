//! Non-negative kernels with an atom, `M(x, A) = m(x, A) + g(x) γ(A)`.
//!
//! Every variant is reduced to a pair of state matrices (see [`crate::space`]):
//! `stem[i][k] = m(x_i, {k})` and `full[i][k] = M(x_i, {k})`, where column
//! `k` carries the mass of state `k`. Functions are acted on by `full · h`,
//! measures (as state masses) by `μᵀ · full`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::{Grid, Measure, Point, SetDescriptor, TypeFunction, TypeSpace};

/// Default tolerance for identities that hold exactly on matrices.
pub const TOL_EXACT: f64 = 1e-10;
/// Default tolerance for identities that hold up to quadrature error.
pub const TOL_QUAD: f64 = 1e-6;
/// Default grading of generated grids.
pub const DEFAULT_GRADING: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub exact: f64,
    pub quad: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: TOL_EXACT,
            quad: TOL_QUAD,
        }
    }
}

/// Which side of the decomposition an operation acts with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// The full kernel `M`.
    Full,
    /// The stem kernel `m`.
    Stem,
}

/// Support of a stem density on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Full,
    /// `m(x, dy)` vanishes for `y < x`.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneParts {
    pub a1: f64,
    pub a: f64,
    pub g1: Vec<f64>,
    pub gamma1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    DenseMatrix,
    DensityQuadrature { support: Support },
    AnalyticExample(AnalyticParams),
    RankOneRemark(RankOneParts),
}

impl KernelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            KernelVariant::DenseMatrix => "dense",
            KernelVariant::DensityQuadrature { .. } => "density",
            KernelVariant::AnalyticExample(_) => "analytic",
            KernelVariant::RankOneRemark(_) => "rankone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// Largest `|M - m - g γ|` over sampled pairs.
    pub max_residual: f64,
    pub min_stem_entry: f64,
    pub gamma_mass: f64,
    /// `Σ g` over states, the finite stand-in for `∫ g dψ`.
    pub g_mass: f64,
    pub clamped_entries: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AtomKernel {
    space: TypeSpace,
    variant: KernelVariant,
    stem: Matrix,
    full: Matrix,
    g: TypeFunction,
    gamma: Measure,
    g_states: Vec<f64>,
    gamma_mass: Vec<f64>,
    /// Stem density at node pairs, for interval evaluation on grids.
    density: Option<Matrix>,
    tol: Tolerances,
    validation: ValidationReport,
}

impl AtomKernel {
    /// Finite kernel from `M`, `g` and `γ`, with `m = M - g ⊗ γ`.
    pub fn dense(full: &[Vec<f64>], g: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        Self::dense_with(full, g, gamma, None, Tolerances::default())
    }

    pub fn dense_with(
        full: &[Vec<f64>],
        g: Vec<f64>,
        gamma: Vec<f64>,
        labels: Option<Vec<String>>,
        tol: Tolerances,
    ) -> Result<Self> {
        let full = Matrix::from_rows(full)?;
        let n = full.rows();
        if !full.is_square() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: full.cols(),
            });
        }
        check_len(&g, n)?;
        check_len(&gamma, n)?;
        if full.min_entry() < 0.0 {
            return Err(Error::InvalidParameter("kernel entries must be >= 0".into()));
        }
        let space = match labels {
            Some(l) => TypeSpace::finite(l)?,
            None => TypeSpace::indexed(n)?,
        };
        let mut stem = full.sub(&Matrix::outer(&g, &gamma));
        let (clamped, worst) = clamp_negative(&mut stem, tol.exact)?;
        let mut warnings = Vec::new();
        if clamped > 0 {
            let msg = format!("clamped {clamped} stem entries in [-tol, 0) (worst {worst:e})");
            warn!("{msg}");
            warnings.push(msg);
        }
        Self::assemble(
            space,
            KernelVariant::DenseMatrix,
            stem,
            TypeFunction::new(g),
            Measure::atomic(gamma),
            None,
            tol,
            clamped,
            worst.abs(),
            warnings,
        )
    }

    /// Finite kernel from the stem matrix, `M = m + g ⊗ γ`.
    pub fn from_stem(stem: &[Vec<f64>], g: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let stem = Matrix::from_rows(stem)?;
        let n = stem.rows();
        if !stem.is_square() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: stem.cols(),
            });
        }
        check_len(&g, n)?;
        check_len(&gamma, n)?;
        Self::assemble(
            TypeSpace::indexed(n)?,
            KernelVariant::DenseMatrix,
            stem,
            TypeFunction::new(g),
            Measure::atomic(gamma),
            None,
            Tolerances::default(),
            0,
            0.0,
            Vec::new(),
        )
    }

    /// Kernel whose stem vanishes: `M = g ⊗ γ`.
    pub fn pure_atom(g: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let n = g.len();
        Self::from_stem(&vec![vec![0.0; n]; n], g, gamma)
    }

    /// Finite kernel with stem `m = g₁ ⊗ γ₁`, where `∫g₁dγ = ∫g dγ₁ = 0`
    /// and `∫g₁dγ₁ = a₁ > ∫g dγ = a > 0`.
    pub fn rank_one(g1: Vec<f64>, gamma1: Vec<f64>, g: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let n = g.len();
        check_len(&g1, n)?;
        check_len(&gamma1, n)?;
        check_len(&gamma, n)?;
        let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
        let a1 = dot(&g1, &gamma1);
        let a = dot(&g, &gamma);
        let cross = dot(&g1, &gamma).abs().max(dot(&g, &gamma1).abs());
        if cross > TOL_EXACT {
            return Err(Error::InvalidParameter(format!(
                "cross integrals must vanish (found {cross:e})"
            )));
        }
        if !(a1 > a && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need a1 > a > 0 (a1 = {a1}, a = {a})"
            )));
        }
        if g1.iter().chain(&gamma1).any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("g1 and gamma1 must be >= 0".into()));
        }
        let stem = Matrix::outer(&g1, &gamma1);
        Self::assemble(
            TypeSpace::indexed(n)?,
            KernelVariant::RankOneRemark(RankOneParts {
                a1,
                a,
                g1,
                gamma1,
            }),
            stem,
            TypeFunction::new(g),
            Measure::atomic(gamma),
            None,
            Tolerances::default(),
            0,
            0.0,
            Vec::new(),
        )
    }

    /// Three-parameter example discretized on `grid`; the grid must carry
    /// a point mass at 0.
    pub fn analytic(params: AnalyticParams, grid: Grid) -> Result<Self> {
        if grid.point_masses() != [0.0] {
            return Err(Error::InvalidSpace(
                "the analytic example needs exactly one point mass, at 0".into(),
            ));
        }
        let nodes = grid.nodes().to_vec();
        let n = nodes.len();
        let mut dens = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                dens[(i, j)] = params.stem_density(nodes[i], nodes[j]);
            }
        }
        let space = TypeSpace::Grid(grid);
        let g = TypeFunction::from_fn(&space, |x| params.g(x));
        let gamma = Measure::new(vec![0.0; n], vec![1.0]);
        let stem = discretize_density(&space, &dens, Support::Upper);
        Self::assemble(
            space,
            KernelVariant::AnalyticExample(params),
            stem,
            g,
            gamma,
            Some(dens),
            Tolerances::default(),
            0,
            0.0,
            Vec::new(),
        )
    }

    /// Three-parameter example on a graded grid of `n` nodes over
    /// `[0, upper]` (default upper bound when `None`).
    pub fn analytic_on(params: AnalyticParams, upper: Option<f64>, n: usize) -> Result<Self> {
        let upper = upper.unwrap_or_else(|| params.default_upper());
        let grid = Grid::graded(upper, n, DEFAULT_GRADING, vec![0.0])?;
        Self::analytic(params, grid)
    }

    /// Grid kernel from stem-density values at node pairs.
    pub fn density(
        grid: Grid,
        density: &[Vec<f64>],
        support: Support,
        g: Vec<f64>,
        gamma: Measure,
    ) -> Result<Self> {
        let dens = Matrix::from_rows(density)?;
        let n = grid.len();
        if dens.rows() != n || dens.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: dens.rows(),
            });
        }
        let space = TypeSpace::Grid(grid);
        let g = TypeFunction::new(g);
        g.check(&space)?;
        gamma.check(&space)?;
        let min = dens.min_entry();
        if min < -TOL_QUAD {
            return Err(Error::InvalidAtom {
                residual: min,
                detail: "negative stem density".into(),
            });
        }
        let mut dens = dens;
        dens.map_in_place(|v| v.max(0.0));
        let stem = discretize_density(&space, &dens, support);
        Self::assemble(
            space,
            KernelVariant::DensityQuadrature { support },
            stem,
            g,
            gamma,
            Some(dens),
            Tolerances::default(),
            0,
            0.0,
            Vec::new(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        space: TypeSpace,
        variant: KernelVariant,
        stem: Matrix,
        g: TypeFunction,
        gamma: Measure,
        density: Option<Matrix>,
        tol: Tolerances,
        clamped: usize,
        clamp_residual: f64,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let g_states = g.to_states(&space)?;
        let gamma_mass = gamma.to_states(&space)?;
        let full = stem.add(&Matrix::outer(&g_states, &gamma_mass));
        let mut k = AtomKernel {
            space,
            variant,
            stem,
            full,
            g,
            gamma,
            g_states,
            gamma_mass,
            density,
            tol,
            validation: ValidationReport {
                valid: false,
                max_residual: clamp_residual,
                min_stem_entry: 0.0,
                gamma_mass: 0.0,
                g_mass: 0.0,
                clamped_entries: clamped,
                warnings,
            },
        };
        k.validation = k.validate_atom()?;
        Ok(k)
    }

    /// Checks the atom decomposition: `m >= 0`, `γ(E) > 0`, `g` not
    /// identically zero, and `M - g ⊗ γ = m`.
    pub fn validate_atom(&self) -> Result<ValidationReport> {
        let tol = self.tolerance();
        let min_stem = self.stem.min_entry();
        if min_stem < -tol {
            return Err(Error::InvalidAtom {
                residual: min_stem,
                detail: "negative stem kernel entry".into(),
            });
        }
        if self.g_states.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidAtom {
                residual: self.g_states.iter().copied().fold(0.0, f64::min),
                detail: "g must be finite and >= 0".into(),
            });
        }
        if !self.gamma.is_nonnegative() {
            return Err(Error::InvalidAtom {
                residual: -1.0,
                detail: "γ must be a non-negative measure".into(),
            });
        }
        let gamma_mass: f64 = self.gamma_mass.iter().sum();
        if !(gamma_mass > 0.0 && gamma_mass.is_finite()) {
            return Err(Error::InvalidAtom {
                residual: gamma_mass,
                detail: "γ must have positive finite mass".into(),
            });
        }
        let g_mass: f64 = self.g.values.iter().sum();
        if !(g_mass > 0.0) {
            return Err(Error::InvalidAtom {
                residual: 0.0,
                detail: "g vanishes identically".into(),
            });
        }
        let decomposition = self
            .full
            .sub(&self.stem)
            .sub(&Matrix::outer(&self.g_states, &self.gamma_mass))
            .max_abs();
        let mut residual = decomposition.max(self.validation.max_residual);
        if let KernelVariant::AnalyticExample(p) = &self.variant {
            residual = residual.max(analytic_decomposition_residual(p));
        }
        let mut warnings = self.validation.warnings.clone();
        if min_stem < 0.0 {
            warnings.push(format!("stem entries down to {min_stem:e} within tolerance"));
        }
        Ok(ValidationReport {
            valid: residual <= tol,
            max_residual: residual,
            min_stem_entry: min_stem,
            gamma_mass,
            g_mass,
            clamped_entries: self.validation.clamped_entries,
            warnings,
        })
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.validation
    }

    pub fn space(&self) -> &TypeSpace {
        &self.space
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    pub fn analytic_params(&self) -> Option<&AnalyticParams> {
        match &self.variant {
            KernelVariant::AnalyticExample(p) => Some(p),
            _ => None,
        }
    }

    pub fn g(&self) -> &TypeFunction {
        &self.g
    }

    pub fn gamma(&self) -> &Measure {
        &self.gamma
    }

    pub fn g_states(&self) -> &[f64] {
        &self.g_states
    }

    pub fn gamma_mass(&self) -> &[f64] {
        &self.gamma_mass
    }

    pub fn matrix(&self, part: Part) -> &Matrix {
        match part {
            Part::Full => &self.full,
            Part::Stem => &self.stem,
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    /// The tolerance identities on this kernel are held to: exact for
    /// finite spaces, quadrature-level on grids.
    pub fn tolerance(&self) -> f64 {
        if self.space.is_finite() {
            self.tol.exact
        } else {
            self.tol.quad
        }
    }

    pub fn states(&self) -> usize {
        self.space.states()
    }

    /// Same kernel with atom `(κ g, γ / κ)`.
    pub fn rescale_atom(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa = {kappa} must be > 0")));
        }
        let g = TypeFunction::new(self.g.values.iter().map(|v| v * kappa).collect());
        let gamma = self.gamma.scaled(1.0 / kappa);
        let variant = match &self.variant {
            KernelVariant::AnalyticExample(_) => KernelVariant::DensityQuadrature {
                support: Support::Upper,
            },
            KernelVariant::RankOneRemark(_) => KernelVariant::DenseMatrix,
            v => v.clone(),
        };
        Self::assemble(
            self.space.clone(),
            variant,
            self.stem.clone(),
            g,
            gamma,
            self.density.clone(),
            self.tol,
            0,
            0.0,
            Vec::new(),
        )
    }

    /// `x ↦ ∫ h(y) M(x, dy)`.
    pub fn apply_kernel(&self, h: &TypeFunction) -> Result<TypeFunction> {
        self.apply(Part::Full, h)
    }

    /// `x ↦ ∫ h(y) m(x, dy)`.
    pub fn apply_stem(&self, h: &TypeFunction) -> Result<TypeFunction> {
        self.apply(Part::Stem, h)
    }

    pub fn apply(&self, part: Part, h: &TypeFunction) -> Result<TypeFunction> {
        let v = h.to_states(&self.space)?;
        Ok(TypeFunction::from_states(
            &self.space,
            &self.matrix(part).mul_vec(&v),
        ))
    }

    /// `A ↦ ∫ M(x, A) μ(dx)`.
    pub fn apply_adjoint(&self, mu: &Measure) -> Result<Measure> {
        self.apply_adjoint_part(Part::Full, mu)
    }

    pub fn apply_adjoint_part(&self, part: Part, mu: &Measure) -> Result<Measure> {
        let mass = mu.to_states(&self.space)?;
        Ok(Measure::from_states(
            &self.space,
            &self.matrix(part).vec_mul(&mass),
        ))
    }

    /// `x ↦ M(x, A)` (or `m(x, A)`) over states.
    pub fn set_function(&self, set: &SetDescriptor, part: Part) -> Result<Vec<f64>> {
        self.space.check_set(set)?;
        let t = match (&self.space, set) {
            (TypeSpace::Grid(_), SetDescriptor::Interval(t)) => *t,
            _ => {
                let ind = self.space.indicator(set)?;
                return Ok(self.matrix(part).mul_vec(&ind));
            }
        };
        let grid = self.space.grid().expect("interval sets live on grids");
        let n = grid.len();
        let stem_nodes: Vec<f64> = match (&self.variant, &self.density) {
            (KernelVariant::AnalyticExample(p), _) => grid
                .nodes()
                .iter()
                .map(|&x| p.stem_power(1, x, t.min(grid.upper())))
                .collect(),
            (KernelVariant::DensityQuadrature { support }, Some(dens)) => (0..n)
                .map(|i| {
                    let lo = match support {
                        Support::Full => 0,
                        Support::Upper => i,
                    };
                    grid.interval_weights(lo, t)
                        .into_iter()
                        .map(|(j, w)| w * dens[(i, j)])
                        .sum()
                })
                .collect(),
            _ => unreachable!("grid kernels carry a density"),
        };
        let gamma_a = match part {
            Part::Full => self.gamma.of_set(&self.space, set)?,
            Part::Stem => 0.0,
        };
        Ok((0..self.states())
            .map(|k| {
                let node = self.space.state_node(k);
                stem_nodes[node] + self.g_states[k] * gamma_a
            })
            .collect())
    }

    /// `x ↦ M^n(x, A)` over states, with `M^0(x, A) = δ_x(A)`.
    pub fn power_function(&self, n: usize, set: &SetDescriptor, part: Part) -> Result<Vec<f64>> {
        if n == 0 {
            return self.space.indicator(set);
        }
        let mut phi = self.set_function(set, part)?;
        let mat = self.matrix(part);
        for _ in 1..n {
            phi = mat.mul_vec(&phi);
        }
        Ok(phi)
    }

    /// `M^n(x, A)`.
    pub fn iterate_kernel(&self, n: usize, x: &Point, set: &SetDescriptor) -> Result<f64> {
        self.iterate(Part::Full, n, x, set)
    }

    /// `m^n(x, A)`.
    pub fn iterate_stem(&self, n: usize, x: &Point, set: &SetDescriptor) -> Result<f64> {
        self.iterate(Part::Stem, n, x, set)
    }

    pub fn iterate(&self, part: Part, n: usize, x: &Point, set: &SetDescriptor) -> Result<f64> {
        let state = self.space.state_of(x)?;
        Ok(self.power_function(n, set, part)?[state])
    }

    /// `[s^n M^n(x, A)]` for `n = 0..=n_max`.
    pub fn scaled_powers(
        &self,
        part: Part,
        s: f64,
        n_max: usize,
        x: &Point,
        set: &SetDescriptor,
    ) -> Result<Vec<f64>> {
        let state = self.space.state_of(x)?;
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(self.space.indicator(set)?[state]);
        if n_max == 0 {
            return Ok(out);
        }
        let mat = self.matrix(part);
        let mut phi: Vec<f64> = self
            .set_function(set, part)?
            .into_iter()
            .map(|v| v * s)
            .collect();
        out.push(phi[state]);
        for _ in 2..=n_max {
            phi = mat.mul_vec(&phi).into_iter().map(|v| v * s).collect();
            out.push(phi[state]);
        }
        Ok(out)
    }
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

/// Clamps entries in `[-tol, 0)` to zero; errors below `-tol`.
fn clamp_negative(m: &mut Matrix, tol: f64) -> Result<(usize, f64)> {
    let min = m.min_entry();
    if min < -tol {
        return Err(Error::InvalidAtom {
            residual: min,
            detail: "M - g ⊗ γ has a negative entry".into(),
        });
    }
    let mut clamped = 0;
    for i in 0..m.rows() {
        for v in m.row_mut(i) {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
    }
    Ok((clamped, min.min(0.0)))
}

/// State matrix of `m(x_i, {y_j}) = ρ(x_i, y_j) w_ij`, where `w_ij` are the
/// weights of the rule over the support of row `i`. Point-mass rows copy
/// the row of their node; point-mass columns stay empty.
fn discretize_density(space: &TypeSpace, dens: &Matrix, support: Support) -> Matrix {
    let grid = space.grid().expect("density kernels live on grids");
    let n = grid.len();
    let states = space.states();
    let mut stem = Matrix::zeros(states, states);
    for i in 0..n {
        let lo = match support {
            Support::Full => 0,
            Support::Upper => i,
        };
        let w = grid.rule_weights(lo, n - 1);
        for (k, wk) in w.iter().enumerate() {
            let j = lo + k;
            stem[(i, j)] = dens[(i, j)] * wk;
        }
    }
    for (p, &node) in grid.point_nodes().iter().enumerate() {
        let row = stem.row(node).to_vec();
        stem.row_mut(n + p).copy_from_slice(&row);
    }
    stem
}

/// `max |M(x, [0, t]) - m(x, [0, t]) - g(x) γ([0, t])|` over a sample of
/// `(x, t)`, each side from its own closed form.
fn analytic_decomposition_residual(p: &AnalyticParams) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let x = 0.5 * i as f64;
            let t = 0.5 * j as f64;
            let full = p.a * (1.0 - (x - t).exp()) * f64::from(u8::from(t >= x)) + p.g(x);
            let split = p.stem_power(1, x, t) + p.g(x) * 1.0;
            worst = worst.max((full - split).abs());
        }
    }
    worst
}
