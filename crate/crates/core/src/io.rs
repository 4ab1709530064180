//! Kernel specification documents, report files and CSV output.
//!
//! A specification is a JSON object whose `variant` field selects the
//! kernel family:
//!
//! ```json
//! {"variant":"dense","M":[[0.5,0.5],[0.25,0.75]],"g":[0.2,0.4],"gamma":[0.5,0.5]}
//! {"variant":"analytic","a":2,"b":2,"c":0.2,"grid":{"T":20,"n":400}}
//! ```

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytic::AnalyticParams;
use crate::error::{Error, Result};
use crate::kernel::{AtomKernel, Support, Tolerances, DEFAULT_GRADING};
use crate::space::{Grid, Measure, Point, SetDescriptor, TypeSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseSpec {
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_quad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_masses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_quad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub density: Vec<f64>,
    #[serde(default)]
    pub atoms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub grid: GridSpec,
    pub density: Vec<Vec<f64>>,
    #[serde(default = "full_support")]
    pub support: Support,
    pub g: Vec<f64>,
    pub gamma: MeasureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_quad: Option<f64>,
}

fn full_support() -> Support {
    Support::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankOneSpec {
    pub g1: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub g: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_quad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum KernelSpec {
    Dense(DenseSpec),
    Analytic(AnalyticSpec),
    Density(DensitySpec),
    #[serde(rename = "rankone")]
    RankOne(RankOneSpec),
}

/// `/a/0/b` form of a deserialization path.
fn json_pointer(prefix: &str, path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Deserializes `value`, reporting failures with their JSON pointer.
pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
        pointer: json_pointer("", e.path()),
        message: e.inner().to_string(),
    })
}

fn schema(pointer: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

impl KernelSpec {
    pub fn from_json(doc: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(doc)?;
        Self::from_value(value)
    }

    pub fn from_value(mut value: Value) -> Result<Self> {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| schema("", "a kernel specification must be an object"))?;
        let variant = match obj.remove("variant") {
            Some(Value::String(v)) => v,
            Some(_) => return Err(schema("/variant", "must be a string")),
            None => return Err(schema("/variant", "missing field")),
        };
        Ok(match variant.as_str() {
            "dense" => KernelSpec::Dense(from_value(value)?),
            "analytic" => KernelSpec::Analytic(from_value(value)?),
            "density" => KernelSpec::Density(from_value(value)?),
            "rankone" => KernelSpec::RankOne(from_value(value)?),
            other => {
                return Err(schema(
                    "/variant",
                    format!("unknown variant '{other}', expected dense, analytic, density or rankone"),
                ))
            }
        })
    }

    /// Compact JSON with fields in declaration order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("specs always serialize")
    }

    fn tolerances(&self) -> Tolerances {
        let (tol, quad) = match self {
            KernelSpec::Dense(s) => (s.tol, s.tol_quad),
            KernelSpec::Analytic(s) => (s.tol, s.tol_quad),
            KernelSpec::Density(s) => (s.tol, s.tol_quad),
            KernelSpec::RankOne(s) => (s.tol, s.tol_quad),
        };
        let d = Tolerances::default();
        Tolerances {
            exact: tol.unwrap_or(d.exact),
            quad: quad.unwrap_or(d.quad),
        }
    }

    /// Builds and validates the kernel, with `overrides` taking precedence
    /// over the tolerances in the document.
    pub fn build_with(&self, overrides: ToleranceOverrides) -> Result<AtomKernel> {
        let mut tol = self.tolerances();
        if let Some(t) = overrides.tol {
            tol.exact = t;
        }
        if let Some(t) = overrides.tol_quad {
            tol.quad = t;
        }
        for (name, v) in [("tol", tol.exact), ("tol_quad", tol.quad)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(&format!("/{name}"), "must be positive"));
            }
        }
        let kernel = match self {
            KernelSpec::Dense(s) => {
                AtomKernel::dense_with(&s.m, s.g.clone(), s.gamma.clone(), s.labels.clone(), tol)?
            }
            KernelSpec::Analytic(s) => {
                let params = AnalyticParams::new(s.a, s.b, s.c)?;
                let n = s.grid.n.ok_or_else(|| schema("/grid/n", "missing field"))?;
                if s.grid.nodes.is_some() {
                    return Err(schema("/grid/nodes", "the analytic variant generates its own nodes"));
                }
                let upper = s.grid.upper.unwrap_or_else(|| params.default_upper());
                let grading = s.grid.grading.unwrap_or(DEFAULT_GRADING);
                let masses = s.grid.point_masses.clone().unwrap_or_else(|| vec![0.0]);
                AtomKernel::analytic(params, Grid::graded(upper, n, grading, masses)?)?
                    .with_tolerances(tol)
            }
            KernelSpec::Density(s) => {
                let grid = build_grid(&s.grid)?;
                let gamma = Measure::new(s.gamma.density.clone(), s.gamma.atoms.clone());
                AtomKernel::density(grid, &s.density, s.support, s.g.clone(), gamma)?
                    .with_tolerances(tol)
            }
            KernelSpec::RankOne(s) => {
                AtomKernel::rank_one(s.g1.clone(), s.gamma1.clone(), s.g.clone(), s.gamma.clone())?
                    .with_tolerances(tol)
            }
        };
        Ok(kernel)
    }

    pub fn build(&self) -> Result<AtomKernel> {
        self.build_with(ToleranceOverrides::default())
    }
}

fn build_grid(spec: &GridSpec) -> Result<Grid> {
    let masses = spec.point_masses.clone().unwrap_or_default();
    match &spec.nodes {
        Some(nodes) => {
            let upper = spec
                .upper
                .or_else(|| nodes.last().copied())
                .ok_or_else(|| schema("/grid/T", "missing field"))?;
            Grid::from_nodes(upper, nodes.clone(), spec.weights.clone(), masses)
        }
        None => {
            let upper = spec.upper.ok_or_else(|| schema("/grid/T", "missing field"))?;
            let n = spec.n.ok_or_else(|| schema("/grid/n", "missing field"))?;
            if spec.weights.is_some() {
                return Err(schema("/grid/weights", "weights need explicit nodes"));
            }
            Grid::graded(upper, n, spec.grading.unwrap_or(DEFAULT_GRADING), masses)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ToleranceOverrides {
    pub tol: Option<f64>,
    pub tol_quad: Option<f64>,
}

/// Parses and validates a kernel specification document.
pub fn parse_kernel_spec(doc: &str) -> Result<AtomKernel> {
    KernelSpec::from_json(doc)?.build()
}

/// `--x` argument: a label name or index on finite spaces, a location on
/// grids.
pub fn parse_point(space: &TypeSpace, s: &str) -> Result<Point> {
    let s = s.trim();
    match space {
        TypeSpace::Finite { labels } => labels
            .iter()
            .position(|l| l == s)
            .or_else(|| s.parse().ok())
            .map(Point::Label)
            .ok_or_else(|| Error::UnrepresentablePoint(s.into())),
        TypeSpace::Grid(_) => s
            .parse()
            .map(Point::At)
            .map_err(|_| Error::UnrepresentablePoint(s.into())),
    }
}

/// `--set` argument: `E` or `all` for the whole space, `0:t` for `[0, t]`
/// on grids, a comma-separated list of labels on finite spaces.
pub fn parse_set(space: &TypeSpace, s: &str) -> Result<SetDescriptor> {
    let s = s.trim();
    if s == "E" || s == "all" {
        return Ok(SetDescriptor::Whole);
    }
    let set = match space {
        TypeSpace::Grid(_) => {
            let (lo, hi) = s
                .split_once(':')
                .ok_or_else(|| Error::UnrepresentableSet(format!("'{s}', expected 0:t")))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::UnrepresentableSet(s.into()))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| Error::UnrepresentableSet(s.into()))?;
            if lo != 0.0 {
                return Err(Error::UnrepresentableSet(format!(
                    "'{s}': only intervals starting at 0 are supported"
                )));
            }
            SetDescriptor::Interval(hi)
        }
        TypeSpace::Finite { .. } => SetDescriptor::Labels(
            s.split(',')
                .map(|part| match parse_point(space, part)? {
                    Point::Label(i) => Ok(i),
                    Point::At(_) => unreachable!(),
                })
                .collect::<Result<_>>()?,
        ),
    };
    space.check_set(&set)?;
    Ok(set)
}

/// Writes through a temporary file in the same directory, then renames, so
/// a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `n,<name>` rows for `n = first, first + 1, ...`.
pub fn series_csv(columns: &[(&str, &[f64])], first: usize) -> String {
    let mut out = String::from("n");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let rows = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for i in 0..rows {
        out.push_str(&(first + i).to_string());
        for (_, v) in columns {
            out.push(',');
            if let Some(x) = v.get(i) {
                out.push_str(&format!("{x}"));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelVariant;

    #[test]
    fn analytic_spec() {
        let k = parse_kernel_spec(r#"{"variant":"analytic","a":2,"b":2,"c":0.2,"grid":{"T":20,"n":400}}"#)
            .unwrap();
        assert!(matches!(k.variant(), KernelVariant::AnalyticExample(_)));
        assert_eq!(k.space().grid().unwrap().len(), 400);
    }

    #[test]
    fn dense_spec_derives_stem() {
        let k = parse_kernel_spec(
            r#"{"variant":"dense","M":[[0.5,0.5],[0.25,0.75]],"g":[0.2,0.4],"gamma":[0.5,0.5]}"#,
        )
        .unwrap();
        assert!(matches!(k.variant(), KernelVariant::DenseMatrix));
        let stem = k.matrix(crate::kernel::Part::Stem).to_rows();
        assert!((stem[1][0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn negative_stem_is_invalid_atom() {
        let err = parse_kernel_spec(
            r#"{"variant":"dense","M":[[0.5,0.5],[0.2,0.75]],"g":[0.2,0.8],"gamma":[0.5,0.5]}"#,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "invalid-atom");
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let err = KernelSpec::from_json(
            r#"{"variant":"dense","M":[[0.5,"x"],[0.25,0.75]],"g":[0.2,0.4],"gamma":[0.5,0.5]}"#,
        )
        .unwrap_err();
        match err {
            Error::Schema { pointer, .. } => assert_eq!(pointer, "/M/0/1"),
            e => panic!("{e:?}"),
        }
        let err = KernelSpec::from_json(r#"{"variant":"analytic","a":2,"b":2,"c":0.2,"grid":{"T":"x"}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Schema { ref pointer, .. } if pointer == "/grid/T"), "{err:?}");
        let err = KernelSpec::from_json(r#"{"M":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Schema { ref pointer, .. } if pointer == "/variant"));
        let err = KernelSpec::from_json(r#"{"variant":"dense","M":[[1]],"g":[1],"gamma":[1],"extra":1}"#)
            .unwrap_err();
        assert_eq!(err.kind(), "schema");
    }

    #[test]
    fn canonical_form_round_trips() {
        let doc = r#"{ "gamma": [0.5, 0.5], "variant": "dense",
                       "g": [0.2, 0.4], "M": [[0.5, 0.5], [0.25, 0.75]], "tol": 1e-9 }"#;
        let spec = KernelSpec::from_json(doc).unwrap();
        let canon = spec.to_canonical_json();
        let again = KernelSpec::from_json(&canon).unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.to_canonical_json(), canon);
        assert!(canon.starts_with(r#"{"variant":"dense","M""#));
    }

    #[test]
    fn spec_tolerances_apply() {
        let k = parse_kernel_spec(
            r#"{"variant":"dense","M":[[0.5,0.5],[0.25,0.75]],"g":[0.2,0.4],"gamma":[0.5,0.5],"tol":1e-8}"#,
        )
        .unwrap();
        assert_eq!(k.tolerances().exact, 1e-8);
    }

    #[test]
    fn points_and_sets() {
        let grid = TypeSpace::Grid(Grid::graded(20.0, 50, 2.0, vec![0.0]).unwrap());
        assert_eq!(parse_set(&grid, "0:1").unwrap(), SetDescriptor::Interval(1.0));
        assert_eq!(parse_set(&grid, "E").unwrap(), SetDescriptor::Whole);
        assert!(parse_set(&grid, "1:2").is_err());
        assert_eq!(parse_point(&grid, "0").unwrap(), Point::At(0.0));
        let fin = TypeSpace::finite(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(parse_set(&fin, "0,2").unwrap(), SetDescriptor::Labels(vec![0, 2]));
        assert_eq!(parse_set(&fin, "b").unwrap(), SetDescriptor::Labels(vec![1]));
        assert_eq!(parse_set(&fin, "all").unwrap(), SetDescriptor::Whole);
        assert!(parse_set(&fin, "7").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_layout() {
        let csv = series_csv(&[("f", &[0.5, 0.25]), ("F", &[0.5])], 1);
        assert_eq!(csv, "n,f,F\n1,0.5,0.5\n2,0.25,\n");
    }
}
