//! Reproduction and cluster laws for the built-in simulation presets.
//!
//! Only the means of `ξ`, `N` and `τ` are fixed by the kernel; the
//! distributional choices here are Poisson for unconstrained counts and
//! Bernoulli/categorical draws for the single-offspring families.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use rand_distr::{Exp1, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticParams;
use crate::error::{Error, Result};
use crate::kernel::AtomKernel;
use crate::space::Point;

use super::{ClusterLaw, ReproductionLaw};

/// Preset families and their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum PresetParams {
    /// One offspring per particle: with probability `g(x)` a regeneration
    /// (`ξ = 0`, `N = 1`, `τ = δ_Y`, `Y ~ γ`), otherwise a move to
    /// `y ~ p(x, ·) / (1 - g(x))` with `p = P - g ⊗ γ`.
    SplitChain {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        g: Vec<f64>,
        gamma: Vec<f64>,
    },
    /// `ξ` is empty or a single particle with `P(ξ = δ_y) = q[x][y]`;
    /// `N = N₀ 1{ξ(E) = 1}` with `N₀` geometric on `{0, 1, ...}` of the
    /// given mean; `τ = δ_Y`, `Y ~ γ`.
    LinearFractional {
        q: Vec<Vec<f64>>,
        mean_n: f64,
        gamma: Vec<f64>,
    },
    /// Poisson(`a`) children at `x + Exp(1)`, `N ~ Poisson(c e^{-bx})`,
    /// `τ = δ_0`. The matching kernel lives on a graded grid.
    AnalyticExample {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        grid_upper: Option<f64>,
        #[serde(default = "default_grid_n")]
        grid_n: usize,
    },
    /// `ξ = 0`, `N ~ Poisson(g(x))`, `τ` a Poisson(`γ(E)`) number of
    /// i.i.d. `γ / γ(E)` points.
    PureAtom { g: Vec<f64>, gamma: Vec<f64> },
}

fn default_grid_n() -> usize {
    200
}

impl PresetParams {
    pub fn name(&self) -> &'static str {
        match self {
            PresetParams::SplitChain { .. } => "split-chain",
            PresetParams::LinearFractional { .. } => "linear-fractional",
            PresetParams::AnalyticExample { .. } => "analytic-example",
            PresetParams::PureAtom { .. } => "pure-atom",
        }
    }

    /// Default parameters of a named preset.
    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "split-chain" => PresetParams::SplitChain {
                p: vec![vec![0.5, 0.5], vec![0.25, 0.75]],
                g: vec![0.2, 0.4],
                gamma: vec![0.5, 0.5],
            },
            "linear-fractional" => PresetParams::LinearFractional {
                q: vec![vec![0.3, 0.2], vec![0.1, 0.4]],
                mean_n: 2.0,
                gamma: vec![0.5, 0.5],
            },
            "analytic-example" => PresetParams::AnalyticExample {
                a: 2.0,
                b: 2.0,
                c: 0.2,
                grid_upper: None,
                grid_n: default_grid_n(),
            },
            "pure-atom" => PresetParams::PureAtom {
                g: vec![0.5, 1.0],
                gamma: vec![0.4, 0.6],
            },
            other => {
                return Err(Error::InvalidParameter(format!("unknown preset '{other}'")));
            }
        })
    }
}

/// Laws of a preset together with the mean kernel they realize.
pub struct Preset {
    pub params: PresetParams,
    pub reproduction: Box<dyn ReproductionLaw>,
    pub cluster: Box<dyn ClusterLaw>,
    pub kernel: AtomKernel,
}

impl std::fmt::Debug for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Preset").field("params", &self.params).finish()
    }
}

fn label(p: &Point) -> usize {
    match p {
        Point::Label(i) => *i,
        Point::At(x) => panic!("finite preset received continuous type {x}"),
    }
}

fn check_probabilities(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParameter(format!("{what} must lie in [0, 1]")));
    }
    Ok(())
}

fn categorical(weights: &[f64]) -> Result<Option<WeightedIndex<f64>>> {
    match WeightedIndex::new(weights) {
        Ok(w) => Ok(Some(w)),
        Err(rand::distr::weighted::Error::InsufficientNonZero) => Ok(None),
        Err(e) => Err(Error::InvalidParameter(format!("bad weights {weights:?}: {e}"))),
    }
}

fn poisson(rng: &mut dyn RngCore, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// `τ = δ_Y`, `Y ~ γ` (a probability vector).
struct SingleParticle {
    pick: WeightedIndex<f64>,
}

impl ClusterLaw for SingleParticle {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<Point> {
        vec![Point::Label(self.pick.sample(rng))]
    }
}

struct SplitChainLaw {
    g: Vec<f64>,
    moves: Vec<Option<WeightedIndex<f64>>>,
}

impl ReproductionLaw for SplitChainLaw {
    fn sample(&self, x: &Point, rng: &mut dyn RngCore) -> (Vec<Point>, u64) {
        let i = label(x);
        let u: f64 = rand::Rng::random(rng);
        match &self.moves[i] {
            Some(w) if u >= self.g[i] => (vec![Point::Label(w.sample(rng))], 0),
            _ => (Vec::new(), 1),
        }
    }
}

struct LinearFractionalLaw {
    /// Probability of one stem offspring, then its type.
    survive: Vec<f64>,
    moves: Vec<Option<WeightedIndex<f64>>>,
    clusters: Option<Geometric>,
}

impl ReproductionLaw for LinearFractionalLaw {
    fn sample(&self, x: &Point, rng: &mut dyn RngCore) -> (Vec<Point>, u64) {
        let i = label(x);
        let u: f64 = rand::Rng::random(rng);
        match &self.moves[i] {
            Some(w) if u < self.survive[i] => {
                let y = w.sample(rng);
                let n = self.clusters.map_or(0, |g| g.sample(rng));
                (vec![Point::Label(y)], n)
            }
            _ => (Vec::new(), 0),
        }
    }
}

struct AnalyticLaw {
    params: AnalyticParams,
}

impl ReproductionLaw for AnalyticLaw {
    fn sample(&self, x: &Point, rng: &mut dyn RngCore) -> (Vec<Point>, u64) {
        let Point::At(x) = *x else {
            panic!("analytic preset needs continuous types");
        };
        let k = poisson(rng, self.params.a);
        let children = (0..k)
            .map(|_| {
                let e: f64 = Exp1.sample(rng);
                Point::At(x + e)
            })
            .collect();
        (children, poisson(rng, self.params.g(x)))
    }
}

struct AtOrigin;

impl ClusterLaw for AtOrigin {
    fn sample(&self, _rng: &mut dyn RngCore) -> Vec<Point> {
        vec![Point::At(0.0)]
    }
}

struct PureAtomLaw {
    g: Vec<f64>,
}

impl ReproductionLaw for PureAtomLaw {
    fn sample(&self, x: &Point, rng: &mut dyn RngCore) -> (Vec<Point>, u64) {
        (Vec::new(), poisson(rng, self.g[label(x)]))
    }
}

struct CompoundPoisson {
    total: f64,
    pick: WeightedIndex<f64>,
}

impl ClusterLaw for CompoundPoisson {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<Point> {
        let k = poisson(rng, self.total);
        (0..k).map(|_| Point::Label(self.pick.sample(rng))).collect()
    }
}

fn check_square(rows: &[Vec<f64>], n: usize) -> Result<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rows.len(),
        });
    }
    Ok(())
}

fn probability_vector(gamma: &[f64]) -> Result<WeightedIndex<f64>> {
    let total: f64 = gamma.iter().sum();
    if (total - 1.0).abs() > 1e-12 || gamma.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(
            "gamma must be a probability vector".into(),
        ));
    }
    categorical(gamma)?.ok_or_else(|| Error::InvalidParameter("gamma has no mass".into()))
}

/// Laws and mean kernel of a preset.
pub fn build_preset(params: PresetParams) -> Result<Preset> {
    let (reproduction, cluster, kernel): (Box<dyn ReproductionLaw>, Box<dyn ClusterLaw>, _) =
        match &params {
            PresetParams::SplitChain { p, g, gamma } => {
                let n = g.len();
                check_square(p, n)?;
                check_probabilities(g, "g")?;
                let pick = probability_vector(gamma)?;
                for row in p {
                    if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 || row.iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidParameter("P must be stochastic".into()));
                    }
                }
                let kernel = AtomKernel::dense(p, g.clone(), gamma.clone())?;
                let moves = (0..n)
                    .map(|i| categorical(kernel.matrix(crate::kernel::Part::Stem).row(i)))
                    .collect::<Result<_>>()?;
                (
                    Box::new(SplitChainLaw {
                        g: g.clone(),
                        moves,
                    }),
                    Box::new(SingleParticle { pick }),
                    kernel,
                )
            }
            PresetParams::LinearFractional { q, mean_n, gamma } => {
                let n = gamma.len();
                check_square(q, n)?;
                if !(*mean_n >= 0.0 && mean_n.is_finite()) {
                    return Err(Error::InvalidParameter("mean_n must be >= 0".into()));
                }
                let survive: Vec<f64> = q.iter().map(|r| r.iter().sum()).collect();
                check_probabilities(&survive, "row sums of q")?;
                if q.iter().flatten().any(|&v| v < 0.0) {
                    return Err(Error::InvalidParameter("q must be >= 0".into()));
                }
                let pick = probability_vector(gamma)?;
                let g: Vec<f64> = survive.iter().map(|s| mean_n * s).collect();
                let kernel = AtomKernel::from_stem(q, g, gamma.clone())?;
                let moves = q.iter().map(|r| categorical(r)).collect::<Result<_>>()?;
                let clusters = if *mean_n > 0.0 {
                    Some(Geometric::new(1.0 / (1.0 + mean_n)).map_err(|e| {
                        Error::InvalidParameter(format!("geometric law: {e}"))
                    })?)
                } else {
                    None
                };
                (
                    Box::new(LinearFractionalLaw {
                        survive,
                        moves,
                        clusters,
                    }),
                    Box::new(SingleParticle { pick }),
                    kernel,
                )
            }
            PresetParams::AnalyticExample {
                a,
                b,
                c,
                grid_upper,
                grid_n,
            } => {
                let p = AnalyticParams::new(*a, *b, *c)?;
                let kernel = AtomKernel::analytic_on(p, *grid_upper, *grid_n)?;
                (
                    Box::new(AnalyticLaw { params: p }),
                    Box::new(AtOrigin),
                    kernel,
                )
            }
            PresetParams::PureAtom { g, gamma } => {
                if g.len() != gamma.len() {
                    return Err(Error::DimensionMismatch {
                        expected: g.len(),
                        found: gamma.len(),
                    });
                }
                let total: f64 = gamma.iter().sum();
                let pick = categorical(gamma)?
                    .ok_or_else(|| Error::InvalidParameter("gamma has no mass".into()))?;
                let kernel = AtomKernel::pure_atom(g.clone(), gamma.clone())?;
                (
                    Box::new(PureAtomLaw { g: g.clone() }),
                    Box::new(CompoundPoisson { total, pick }),
                    kernel,
                )
            }
        };
    Ok(Preset {
        params,
        reproduction,
        cluster,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_chain_kernel_is_the_transition_matrix() {
        let preset = build_preset(PresetParams::default_for("split-chain").unwrap()).unwrap();
        let stem = preset.kernel.matrix(crate::kernel::Part::Stem).to_rows();
        let expect = [[0.4, 0.4], [0.05, 0.55]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((stem[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_fractional_g_is_mean_times_survival() {
        let preset = build_preset(PresetParams::default_for("linear-fractional").unwrap()).unwrap();
        assert_eq!(preset.kernel.g().values, vec![2.0 * 0.5, 2.0 * 0.5]);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(PresetParams::default_for("nope").is_err());
        let bad = PresetParams::SplitChain {
            p: vec![vec![0.5, 0.4], vec![0.25, 0.75]],
            g: vec![0.2, 0.4],
            gamma: vec![0.5, 0.5],
        };
        assert!(build_preset(bad).is_err());
        let bad_g = PresetParams::SplitChain {
            p: vec![vec![0.5, 0.5], vec![0.25, 0.75]],
            g: vec![1.2, 0.4],
            gamma: vec![0.5, 0.5],
        };
        assert!(build_preset(bad_g).is_err());
    }

    #[test]
    fn params_round_trip_through_json() {
        let p = PresetParams::default_for("analytic-example").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"preset\":\"analytic-example\""));
        let back: PresetParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
