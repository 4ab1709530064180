//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{
    coefficient_decomposition_residual, compare_with_oracle, perron_limit,
    resolvent_decomposition_with, LimitOptions, DEFAULT_NMAX,
};
use crate::error::{Error, Result};
use crate::invariant::{check_subinvariance, invariant_pair_from};
use crate::io::{
    from_value, parse_point, parse_set, series_csv, to_json, write_atomic, KernelSpec,
    ToleranceOverrides,
};
use crate::kernel::{AtomKernel, KernelVariant};
use crate::sim::{self, build_preset, PresetParams};
use crate::space::{Point, SetDescriptor};
use crate::spectral::{classify, compute_Fn, compute_fn, DEFAULT_ORDER};

/// Default horizon of `simulate`.
pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_REPLICATES: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "kernelpf", version, about = "Perron-Frobenius analysis of kernels with an atom")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Kernel specification (JSON); preset parameters for `simulate`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Report path; CSV side files are written next to it. Defaults to stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Series truncation order (simulation horizon for `simulate`).
    #[arg(long = "N", global = true)]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Length of limit traces and coefficient checks.
    #[arg(long, global = true, default_value_t = DEFAULT_NMAX)]
    pub nmax: usize,
    #[arg(long, global = true, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for identities exact on matrices.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Tolerance for identities exact up to quadrature error.
    #[arg(long = "tol-quad", global = true)]
    pub tol_quad: Option<f64>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Convergence parameter and recurrence class.
    Classify,
    /// R-invariant function and measure.
    Invariants,
    /// Trace of R^n M^n(x, A) against its predicted limit.
    Limit {
        /// State label or index, or a grid point.
        #[arg(long)]
        x: String,
        /// `0:t`, `E`, or comma-separated labels.
        #[arg(long)]
        set: String,
        /// Judge convergence on Cesàro means.
        #[arg(long)]
        cesaro: bool,
    },
    /// Monte Carlo estimates of f_n and F_n for a preset.
    Simulate {
        /// split-chain, linear-fractional, analytic-example or pure-atom.
        #[arg(long)]
        preset: String,
        /// Stream life records to this file, one JSON object per line.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Both sides of the resolvent decomposition at s.
    Decompose {
        /// Defaults to R / 2.
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        x: String,
        #[arg(long)]
        set: String,
    },
    /// Comparison with a power-iteration eigen oracle (finite kernels).
    Oracle {
        #[arg(long, default_value = "0")]
        x: String,
        #[arg(long, default_value = "E")]
        set: String,
    },
}

/// Settings a report was produced with, defaults included.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'a Command,
    input: Option<&'a Path>,
    #[serde(rename = "N")]
    n: usize,
    nmax: usize,
    replicates: usize,
    seed: u64,
    tol: f64,
    tol_quad: f64,
}

struct Output {
    report: Value,
    /// (suffix, contents) written next to the report.
    side_files: Vec<(String, String)>,
    /// Failure to report after the files are written.
    deferred: Option<Error>,
}

fn read_input(common: &Common) -> Result<String> {
    let path = common
        .input
        .as_ref()
        .ok_or_else(|| Error::Precondition("--input is required".into()))?;
    Ok(std::fs::read_to_string(path)?)
}

fn load_kernel(common: &Common) -> Result<AtomKernel> {
    let spec = KernelSpec::from_json(&read_input(common)?)?;
    spec.build_with(ToleranceOverrides {
        tol: common.tol,
        tol_quad: common.tol_quad,
    })
}

fn kernel_summary(k: &AtomKernel) -> Value {
    json!({
        "variant": k.variant().name(),
        "states": k.states(),
        "validation": k.validation(),
    })
}

fn config<'a>(cli: &'a Cli, n: usize, k: Option<&AtomKernel>) -> RunConfig<'a> {
    let tol = k.map(|k| k.tolerances()).unwrap_or_default();
    RunConfig {
        command: &cli.command,
        input: cli.common.input.as_deref(),
        n,
        nmax: cli.common.nmax,
        replicates: cli.common.replicates,
        seed: cli.common.seed,
        tol: cli.common.tol.unwrap_or(tol.exact),
        tol_quad: cli.common.tol_quad.unwrap_or(tol.quad),
    }
}

fn point_and_set(k: &AtomKernel, x: &str, set: &str) -> Result<(Point, SetDescriptor)> {
    Ok((parse_point(k.space(), x)?, parse_set(k.space(), set)?))
}

fn closed_form_limit(k: &AtomKernel, x: &Point, set: &SetDescriptor) -> Option<f64> {
    let (KernelVariant::AnalyticExample(p), Point::At(x)) = (k.variant(), x) else {
        return None;
    };
    match set {
        SetDescriptor::Interval(t) => Some(p.limit(*x, *t)),
        SetDescriptor::Whole => p.limit_whole(*x),
        SetDescriptor::Labels(_) => None,
    }
}

fn execute(cli: &Cli) -> Result<Output> {
    let common = &cli.common;
    let order = common.n.unwrap_or(DEFAULT_ORDER);
    let mut side_files = Vec::new();
    let mut deferred = None;
    let (n_used, kernel, body) = match &cli.command {
        Command::Classify => {
            let k = load_kernel(common)?;
            let rep = classify(&k, order)?;
            let f = compute_fn(&k, order)?;
            let big_f = compute_Fn(&k, order)?;
            side_files.push((
                "series.csv".into(),
                series_csv(&[("f", &f.coeffs()[1..]), ("F", &big_f.coeffs()[1..])], 1),
            ));
            (order, k, serde_json::to_value(rep)?)
        }
        Command::Invariants => {
            let k = load_kernel(common)?;
            let rep = classify(&k, order)?;
            let pair = invariant_pair_from(&k, &rep, order)?;
            let sub = check_subinvariance(&k, pair.s, &pair.h, &pair.pi)?;
            let body = json!({ "spectral": rep, "pair": pair, "subinvariance": sub });
            (order, k, body)
        }
        Command::Limit { x, set, cesaro } => {
            let k = load_kernel(common)?;
            let (x, set) = point_and_set(&k, x, set)?;
            let opts = LimitOptions {
                n_max: common.nmax,
                order,
                tol: None,
                cesaro: *cesaro,
            };
            let rep = perron_limit(&k, &x, &set, opts)?;
            let mut cols: Vec<(&str, &[f64])> = vec![("trace", &rep.trace)];
            if let Some(c) = &rep.cesaro {
                cols.push(("cesaro", c));
            }
            side_files.push(("trace.csv".into(), series_csv(&cols, 1)));
            if !rep.converged {
                deferred = Some(Error::NonConvergence {
                    iterations: rep.n_max,
                    detail: format!(
                        "trace ends at {} against predicted limit {}",
                        rep.final_value(),
                        rep.predicted_limit
                    ),
                });
            }
            let closed = closed_form_limit(&k, &x, &set);
            let mut body = serde_json::to_value(&rep)?;
            body["closed_form_limit"] = json!(closed);
            (order, k, body)
        }
        Command::Decompose { s, x, set } => {
            let k = load_kernel(common)?;
            let (x, set) = point_and_set(&k, x, set)?;
            let s = match s {
                Some(s) => *s,
                None => classify(&k, order)?.big_r / 2.0,
            };
            let rep = resolvent_decomposition_with(&k, s, &x, &set, order)?;
            let coeff = coefficient_decomposition_residual(&k, common.nmax, &x, &set)?;
            let mut body = serde_json::to_value(rep)?;
            body["coefficient_residual"] = json!(coeff);
            (order, k, body)
        }
        Command::Oracle { x, set } => {
            let k = load_kernel(common)?;
            if !k.space().is_finite() {
                return Err(Error::UnsupportedVariant(k.variant().name()));
            }
            let (x, set) = point_and_set(&k, x, set)?;
            let rep = compare_with_oracle(&k, &x, &set, order)?;
            (order, k, serde_json::to_value(rep)?)
        }
        Command::Simulate { preset, records } => {
            let horizon = common.n.unwrap_or(DEFAULT_HORIZON);
            let params: PresetParams = match &common.input {
                Some(_) => {
                    let value: Value = serde_json::from_str(&read_input(common)?)?;
                    from_value(value)?
                }
                None => PresetParams::default_for(preset)?,
            };
            if params.name() != preset {
                return Err(Error::InvalidParameter(format!(
                    "--preset {preset} does not match input preset {}",
                    params.name()
                )));
            }
            let p = build_preset(params)?;
            let batch = sim::estimate_series(p.laws(), common.replicates, horizon, common.seed)?;
            if let Some(path) = records {
                write_atomic(path, sim::records_to_jsonl(&batch.records).as_bytes())?;
            }
            let f = compute_fn(&p.kernel, horizon)?;
            let big_f = compute_Fn(&p.kernel, horizon)?;
            let z = |est: &sim::Estimate, exact: f64| {
                let d = est.mean - exact;
                if est.se > 0.0 {
                    d / est.se
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(d)
                }
            };
            let comparison: Vec<Value> = (1..=horizon)
                .map(|n| {
                    let (fh, bh) = (&batch.f_hat[n - 1], &batch.big_f_hat[n - 1]);
                    json!({
                        "n": n,
                        "f": f.coeff(n), "f_hat": fh.mean, "f_se": fh.se,
                        "f_z": crate::num::ext_value(z(fh, f.coeff(n))),
                        "F": big_f.coeff(n), "F_hat": bh.mean, "F_se": bh.se,
                        "F_z": crate::num::ext_value(z(bh, big_f.coeff(n))),
                    })
                })
                .collect();
            let fh: Vec<f64> = batch.f_hat.iter().map(|e| e.mean).collect();
            let bh: Vec<f64> = batch.big_f_hat.iter().map(|e| e.mean).collect();
            side_files.push((
                "series.csv".into(),
                series_csv(
                    &[
                        ("f", &f.coeffs()[1..]),
                        ("f_hat", &fh),
                        ("F", &big_f.coeffs()[1..]),
                        ("F_hat", &bh),
                    ],
                    1,
                ),
            ));
            let body = json!({
                "preset": p.params,
                "batch": batch,
                "comparison": comparison,
            });
            (horizon, p.kernel, body)
        }
    };
    let report = json!({
        "config": config(cli, n_used, Some(&kernel)),
        "kernel": kernel_summary(&kernel),
        "report": body,
    });
    Ok(Output {
        report,
        side_files,
        deferred,
    })
}

fn side_path(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    output.with_file_name(format!("{stem}.{suffix}"))
}

fn emit(cli: &Cli, out: &Output) -> Result<()> {
    let text = to_json(&out.report)?;
    match &cli.common.output {
        Some(path) => {
            for (suffix, contents) in &out.side_files {
                write_atomic(&side_path(path, suffix), contents.as_bytes())?;
            }
            write_atomic(path, text.as_bytes())?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// One-line JSON description of an error.
pub fn error_line(e: &Error) -> String {
    json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() }).to_string()
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    let result = execute(cli).and_then(|out| {
        emit(cli, &out)?;
        Ok(out.deferred)
    });
    match result {
        Ok(None) => 0,
        Ok(Some(e)) | Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("kernelpf").chain(args.iter().copied())).unwrap()
    }

    fn spec_file(dir: &Path, doc: &str) -> String {
        let p = dir.join("spec.json");
        std::fs::write(&p, doc).unwrap();
        p.to_string_lossy().into_owned()
    }

    #[test]
    fn flags_parse() {
        let c = cli(&["limit", "--x", "0", "--set", "0:1", "--N", "50", "--nmax", "20", "--tol-quad", "1e-5"]);
        assert_eq!(c.common.n, Some(50));
        assert_eq!(c.common.nmax, 20);
        assert_eq!(c.common.tol_quad, Some(1e-5));
        assert!(matches!(c.command, Command::Limit { .. }));
    }

    #[test]
    fn classify_writes_report_and_series() {
        let dir = tempfile::tempdir().unwrap();
        let input = spec_file(
            dir.path(),
            r#"{"variant":"dense","M":[[0.5,0.5],[0.25,0.75]],"g":[0.2,0.4],"gamma":[0.5,0.5]}"#,
        );
        let out = dir.path().join("rep.json");
        let c = cli(&["classify", "--input", &input, "--output", out.to_str().unwrap()]);
        assert_eq!(run(&c), 0);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["report"]["class"], "RPositiveRecurrent");
        assert_eq!(v["config"]["N"], 200);
        assert_eq!(v["config"]["nmax"], 500);
        assert_eq!(v["config"]["tol"], 1e-10);
        let csv = std::fs::read_to_string(dir.path().join("rep.series.csv")).unwrap();
        assert!(csv.starts_with("n,f,F\n1,"));
    }

    #[test]
    fn invalid_atom_exits_two_without_report() {
        let dir = tempfile::tempdir().unwrap();
        let input = spec_file(
            dir.path(),
            r#"{"variant":"dense","M":[[0.5,0.5],[0.2,0.75]],"g":[0.2,0.8],"gamma":[0.5,0.5]}"#,
        );
        let out = dir.path().join("rep.json");
        let c = cli(&["classify", "--input", &input, "--output", out.to_str().unwrap()]);
        assert_eq!(run(&c), 2);
        assert!(!out.exists());
    }

    #[test]
    fn missing_input_is_a_precondition() {
        assert_eq!(run(&cli(&["invariants"])), 2);
    }

    #[test]
    fn oracle_refuses_grids() {
        let dir = tempfile::tempdir().unwrap();
        let input = spec_file(dir.path(), r#"{"variant":"analytic","a":2,"b":2,"c":0.2,"grid":{"T":20,"n":50}}"#);
        let out = dir.path().join("rep.json");
        let c = cli(&["oracle", "--input", &input, "--output", out.to_str().unwrap()]);
        assert_eq!(run(&c), 2);
    }

    #[test]
    fn side_paths() {
        assert_eq!(side_path(Path::new("/a/rep.json"), "trace.csv"), PathBuf::from("/a/rep.trace.csv"));
    }
}
