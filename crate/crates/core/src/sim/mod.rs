//! Monte Carlo simulation of Galton-Watson processes with clusters.
//!
//! A particle of type `x` reproduces as `ξ^(x) + Σ_{i ≤ N^(x)} τ_i`: the
//! stem offspring `ξ` plus `N` independent clusters. Following only the
//! stem offspring of the initial cluster gives its life record
//! `(X_1, ..., X_L)`; following everything gives the newborn-cluster
//! counts `W_n`.

pub mod presets;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::space::Point;

pub use presets::{build_preset, Preset, PresetParams};

/// Default cap on the number of individuals alive in one replicate.
pub const POPULATION_CAP: u64 = 10_000_000;
/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "KERNELPF_THREADS";

/// Sampler of a cluster `τ` with mean measure `γ`.
pub trait ClusterLaw: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<Point>;
}

/// Joint sampler of the stem offspring `ξ^(x)` and the cluster count
/// `N^(x)`.
pub trait ReproductionLaw: Send + Sync {
    fn sample(&self, x: &Point, rng: &mut dyn RngCore) -> (Vec<Point>, u64);
}

#[derive(Clone, Copy)]
pub struct Laws<'a> {
    pub reproduction: &'a dyn ReproductionLaw,
    pub cluster: &'a dyn ClusterLaw,
}

impl Preset {
    pub fn laws(&self) -> Laws<'_> {
        Laws {
            reproduction: self.reproduction.as_ref(),
            cluster: self.cluster.as_ref(),
        }
    }
}

/// Independent stream `index` of the master seed.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifeRecord {
    /// `X_1..X_L`; `X_n = 0` beyond.
    #[serde(rename = "X")]
    pub x: Vec<u64>,
    #[serde(rename = "L")]
    pub l: usize,
    /// The stem was still alive at the horizon (or hit the population cap).
    pub censored: bool,
}

impl LifeRecord {
    pub fn get(&self, n: usize) -> u64 {
        if n == 0 {
            return 0;
        }
        self.x.get(n - 1).copied().unwrap_or(0)
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    Ok(())
}

/// One generation step: every particle reproduces, in order. Returns the
/// stem offspring and the total cluster count.
fn step(laws: Laws<'_>, gen: &[Point], rng: &mut dyn RngCore) -> (Vec<Point>, u64) {
    let mut next = Vec::new();
    let mut clusters = 0;
    for x in gen {
        let (xi, n) = laws.reproduction.sample(x, rng);
        next.extend(xi);
        clusters += n;
    }
    (next, clusters)
}

/// Life record of the initial cluster `Z₀ = τ`, followed through its stem
/// offspring only.
pub fn simulate_life_record(
    laws: Laws<'_>,
    rng: &mut dyn RngCore,
    horizon: usize,
) -> Result<LifeRecord> {
    check_horizon(horizon)?;
    let mut gen = laws.cluster.sample(rng);
    let mut x = Vec::new();
    for n in 1..=horizon {
        let (next, clusters) = step(laws, &gen, rng);
        x.push(clusters);
        if next.is_empty() {
            return Ok(LifeRecord {
                x,
                l: n,
                censored: false,
            });
        }
        if next.len() as u64 > POPULATION_CAP {
            return Ok(LifeRecord {
                x,
                l: n,
                censored: true,
            });
        }
        gen = next;
    }
    Ok(LifeRecord {
        x,
        l: horizon,
        censored: true,
    })
}

/// `W_1..W_horizon` of the full population started from one cluster.
pub fn simulate_cmj(laws: Laws<'_>, rng: &mut dyn RngCore, horizon: usize) -> Result<Vec<u64>> {
    simulate_cmj_capped(laws, rng, horizon, POPULATION_CAP)
}

pub fn simulate_cmj_capped(
    laws: Laws<'_>,
    rng: &mut dyn RngCore,
    horizon: usize,
    cap: u64,
) -> Result<Vec<u64>> {
    check_horizon(horizon)?;
    let mut gen = laws.cluster.sample(rng);
    let mut w = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        // stem draws first so that the first step matches the life record
        let (mut next, clusters) = step(laws, &gen, rng);
        w.push(clusters);
        if n == horizon {
            break;
        }
        for _ in 0..clusters {
            next.extend(laws.cluster.sample(rng));
            if next.len() as u64 > cap {
                return Err(Error::Explosion {
                    cap,
                    step: n,
                    partial: w,
                });
            }
        }
        if next.len() as u64 > cap {
            return Err(Error::Explosion {
                cap,
                step: n,
                partial: w,
            });
        }
        gen = next;
    }
    Ok(w)
}

/// Replays a fixed genealogy. Types are node ids; node `i` has the stem
/// children and cluster count in `table[i]`, and every cluster consists of
/// the `roots`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedLaw {
    pub roots: Vec<usize>,
    pub table: Vec<(Vec<usize>, u64)>,
}

impl ScriptedLaw {
    pub fn laws(&self) -> Laws<'_> {
        Laws {
            reproduction: self,
            cluster: self,
        }
    }
}

impl ClusterLaw for ScriptedLaw {
    fn sample(&self, _rng: &mut dyn RngCore) -> Vec<Point> {
        self.roots.iter().map(|&i| Point::Label(i)).collect()
    }
}

impl ReproductionLaw for ScriptedLaw {
    fn sample(&self, x: &Point, _rng: &mut dyn RngCore) -> (Vec<Point>, u64) {
        let Point::Label(i) = x else {
            panic!("scripted law needs labelled types");
        };
        let (children, n) = &self.table[*i];
        (children.iter().map(|&c| Point::Label(c)).collect(), *n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBatch {
    pub replicates: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub seed: u64,
    pub workers: usize,
    pub f_hat: Vec<Estimate>,
    #[serde(rename = "F_hat")]
    pub big_f_hat: Vec<Estimate>,
    /// Per-replicate `W_1..W_N`; empty for exploded replicates.
    pub w_trajectories: Vec<Vec<u64>>,
    pub exploded: usize,
    pub censored: usize,
    /// Life records in replicate order.
    #[serde(skip)]
    pub records: Vec<LifeRecord>,
}

struct Replicate {
    record: LifeRecord,
    w: Option<Vec<u64>>,
}

fn estimates<'a>(rows: impl Iterator<Item = &'a [u64]> + Clone, horizon: usize) -> Vec<Estimate> {
    let count = rows.clone().count();
    (1..=horizon)
        .map(|n| {
            let vals = rows.clone().map(|r| r.get(n - 1).copied().unwrap_or(0) as f64);
            let mean = vals.clone().sum::<f64>() / count as f64;
            let var = if count > 1 {
                vals.map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            Estimate {
                n,
                mean,
                se: (var / count as f64).sqrt(),
            }
        })
        .collect()
}

/// Worker count from [`THREADS_ENV`], else rayon's default.
pub fn default_workers() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// `f̂_n` and `F̂_n` for `n = 1..horizon` from `replicates` independent
/// (life record, CMJ trajectory) pairs, replicate `i` using stream `i` of
/// `seed`.
pub fn estimate_series(
    laws: Laws<'_>,
    replicates: usize,
    horizon: usize,
    seed: u64,
) -> Result<SimBatch> {
    estimate_series_with(laws, replicates, horizon, seed, default_workers())
}

pub fn estimate_series_with(
    laws: Laws<'_>,
    replicates: usize,
    horizon: usize,
    seed: u64,
    workers: usize,
) -> Result<SimBatch> {
    estimate_series_capped(laws, replicates, horizon, seed, workers, POPULATION_CAP)
}

/// [`estimate_series_with`] with an explicit population cap.
pub fn estimate_series_capped(
    laws: Laws<'_>,
    replicates: usize,
    horizon: usize,
    seed: u64,
    workers: usize,
    cap: u64,
) -> Result<SimBatch> {
    if replicates < 100 {
        return Err(Error::InvalidParameter("replicates must be >= 100".into()));
    }
    check_horizon(horizon)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let run = |i: usize| -> Result<Replicate> {
        let mut rng = stream(seed, i as u64);
        let record = simulate_life_record(laws, &mut rng, horizon)?;
        let w = match simulate_cmj_capped(laws, &mut rng, horizon, cap) {
            Ok(w) => Some(w),
            Err(Error::Explosion { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Replicate { record, w })
    };
    let reps: Vec<Replicate> = pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })?;

    let exploded = reps.iter().filter(|r| r.w.is_none()).count();
    if 2 * exploded > replicates {
        return Err(Error::UnreliableEstimate {
            exploded,
            replicates,
        });
    }
    let f_hat = estimates(reps.iter().map(|r| r.record.x.as_slice()), horizon);
    let big_f_hat = estimates(reps.iter().filter_map(|r| r.w.as_deref()), horizon);
    let censored = reps.iter().filter(|r| r.record.censored).count();
    let (records, w_trajectories) = reps
        .into_iter()
        .map(|r| (r.record, r.w.unwrap_or_default()))
        .unzip();
    Ok(SimBatch {
        replicates,
        horizon,
        seed,
        workers,
        f_hat,
        big_f_hat,
        w_trajectories,
        exploded,
        censored,
        records,
    })
}

/// One JSON object per line: replicate index, `L`, censoring flag and `X`.
pub fn records_to_jsonl(records: &[LifeRecord]) -> String {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        let line = serde_json::json!({
            "index": i,
            "L": r.l,
            "censored": r.censored,
            "X": r.x,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenerationSample {
    pub gaps: Vec<usize>,
    pub censored: usize,
    pub mean: f64,
    pub se: f64,
}

/// Gaps between regenerations along a single lineage. Each record of a
/// split chain ends at its first regeneration, so the gaps are the
/// uncensored `L`s.
pub fn regeneration_times(records: &[LifeRecord]) -> Result<RegenerationSample> {
    let mut gaps = Vec::with_capacity(records.len());
    let mut censored = 0;
    for r in records {
        let total: u64 = r.x.iter().sum();
        let single_lineage = if r.censored {
            total == 0
        } else {
            total == 1 && r.get(r.l) == 1
        };
        if !single_lineage {
            return Err(Error::Precondition(format!(
                "record {:?} is not a single lineage with one regeneration",
                r.x
            )));
        }
        if r.censored {
            censored += 1;
        } else {
            gaps.push(r.l);
        }
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<usize>() as f64 / n;
    let var = gaps.iter().map(|&g| (g as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RegenerationSample {
        gaps,
        censored,
        mean,
        se: (var / n).sqrt(),
    })
}

/// `count` split-chain records with stream indices `0..count`.
pub fn sample_records(laws: Laws<'_>, count: usize, horizon: usize, seed: u64) -> Result<Vec<LifeRecord>> {
    (0..count)
        .into_par_iter()
        .map(|i| simulate_life_record(laws, &mut stream(seed, i as u64), horizon))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of integer observations `≥ 1` against
/// `P(n) = probs[n - 1]`, the missing mass forming a final bin together
/// with `censored` observations. Adjacent cells are merged until each
/// expects at least 5 observations.
pub fn chi_square_gof(observed: &[usize], censored: usize, probs: &[f64]) -> Result<GoodnessOfFit> {
    let total = (observed.len() + censored) as f64;
    let mut counts = vec![0usize; probs.len() + 1];
    for &v in observed {
        if v == 0 {
            return Err(Error::InvalidParameter("observations must be >= 1".into()));
        }
        counts[(v - 1).min(probs.len())] += 1;
    }
    counts[probs.len()] += censored;
    let rest = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let expected: Vec<f64> = probs.iter().chain(std::iter::once(&rest)).map(|p| p * total).collect();

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (c, x) in counts.iter().zip(&expected) {
        o += *c as f64;
        e += x;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InvalidParameter("too few cells for a chi-square test".into()));
    }
    let statistic: f64 = cells
        .iter()
        .map(|(o, e)| if *e > 0.0 { (o - e).powi(2) / e } else if *o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(GoodnessOfFit {
        statistic,
        dof,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted_genealogy() -> ScriptedLaw {
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

    #[test]
    fn scripted_genealogy_replay() {
        let s = scripted_genealogy();
        let laws = s.laws();
        let rec = simulate_life_record(laws, &mut stream(0, 0), 100).unwrap();
        assert_eq!(rec.x, vec![3, 2, 2, 0, 2, 1]);
        assert_eq!(rec.l, 6);
        assert!(!rec.censored);
        assert_eq!(rec.get(7), 0);
        let short = simulate_life_record(laws, &mut stream(0, 0), 4).unwrap();
        assert!(short.censored);
        assert_eq!(short.x, vec![3, 2, 2, 0]);
    }

    #[test]
    fn pure_atom_records_end_at_one() {
        let preset = build_preset(PresetParams::default_for("pure-atom").unwrap()).unwrap();
        for i in 0..200 {
            let rec = simulate_life_record(preset.laws(), &mut stream(3, i), 10).unwrap();
            assert_eq!(rec.l, 1);
            assert!(!rec.censored);
        }
    }

    #[test]
    fn horizon_one_cmj_matches_record() {
        let preset = build_preset(PresetParams::default_for("linear-fractional").unwrap()).unwrap();
        for i in 0..200 {
            let rec = simulate_life_record(preset.laws(), &mut stream(9, i), 1).unwrap();
            let w = simulate_cmj(preset.laws(), &mut stream(9, i), 1).unwrap();
            assert_eq!(w, vec![rec.x[0]]);
        }
    }

    #[test]
    fn explosion_carries_partial_trajectory() {
        let preset = build_preset(PresetParams::PureAtom {
            g: vec![3.0],
            gamma: vec![2.0],
        })
        .unwrap();
        match simulate_cmj_capped(preset.laws(), &mut stream(1, 0), 50, 1000) {
            Err(Error::Explosion { cap, partial, .. }) => {
                assert_eq!(cap, 1000);
                assert!(!partial.is_empty());
            }
            other => panic!("expected explosion, got {other:?}"),
        }
    }

    #[test]
    fn estimate_rejects_small_batches() {
        let preset = build_preset(PresetParams::default_for("pure-atom").unwrap()).unwrap();
        assert!(estimate_series_with(preset.laws(), 10, 3, 0, 1).is_err());
    }

    #[test]
    fn mostly_exploding_batches_are_unreliable() {
        let preset = build_preset(PresetParams::PureAtom {
            g: vec![50.0],
            gamma: vec![50.0],
        })
        .unwrap();
        let err = estimate_series_capped(preset.laws(), 100, 6, 0, 2, 10_000).unwrap_err();
        assert_eq!(err.kind(), "unreliable-estimate");
    }

    #[test]
    fn regeneration_every_step() {
        let preset = build_preset(PresetParams::SplitChain {
            p: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            g: vec![1.0, 1.0],
            gamma: vec![0.5, 0.5],
        })
        .unwrap();
        let recs = sample_records(preset.laws(), 500, 10, 4).unwrap();
        let sample = regeneration_times(&recs).unwrap();
        assert!(sample.gaps.iter().all(|&g| g == 1));
        assert_eq!(sample.censored, 0);
    }

    #[test]
    fn regeneration_rejects_branching_records() {
        let recs = vec![LifeRecord {
            x: vec![3, 2],
            l: 2,
            censored: false,
        }];
        assert!(regeneration_times(&recs).is_err());
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        let probs = [0.5, 0.25, 0.125, 0.125];
        let mut obs = Vec::new();
        for (n, p) in probs.iter().enumerate() {
            obs.extend(std::iter::repeat_n(n + 1, (p * 800.0) as usize));
        }
        let gof = chi_square_gof(&obs, 0, &probs).unwrap();
        assert!(gof.statistic < 1e-12);
        assert!((gof.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jsonl_has_one_line_per_record() {
        let recs = vec![
            LifeRecord {
                x: vec![1],
                l: 1,
                censored: false,
            },
            LifeRecord {
                x: vec![0, 0],
                l: 2,
                censored: true,
            },
        ];
        let s = records_to_jsonl(&recs);
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["index"], 1);
        assert_eq!(v["censored"], true);
    }
}
