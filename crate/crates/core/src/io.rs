//! Problem and certificate files, and CSV sample ingestion.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cone::Polyhedron;
use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::linalg::Rows;
use crate::newsvendor::{newsvendor_problem, Center, DemandSample, NewsvendorInstance};
use crate::portfolio::{portfolio_problem, PortfolioInstance, PortfolioSample};
use crate::stationarity::{Certificate, Problem, SCHEMA};

fn schema_version() -> String {
    SCHEMA.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioFile {
    #[serde(default = "schema_version")]
    pub schema: String,
    #[serde(flatten)]
    pub instance: PortfolioInstance,
    /// Predictor that generated synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorFile {
    #[serde(default = "schema_version")]
    pub schema: String,
    #[serde(flatten)]
    pub instance: NewsvendorInstance,
}

/// A problem file, discriminated by its `"type"` field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemFile {
    SpoPortfolio(PortfolioFile),
    NewsvendorKernel(NewsvendorFile),
}

impl ProblemFile {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemFile::SpoPortfolio(f) => f.instance.validate(),
            ProblemFile::NewsvendorKernel(f) => f.instance.validate(),
        }
    }

    pub fn to_problem(&self) -> Result<Problem> {
        match self {
            ProblemFile::SpoPortfolio(f) => portfolio_problem(&f.instance),
            ProblemFile::NewsvendorKernel(f) => newsvendor_problem(&f.instance),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProblemFile::SpoPortfolio(_) => "spo_portfolio",
            ProblemFile::NewsvendorKernel(_) => "newsvendor_kernel",
        }
    }
}

/// A feasible set as written in query files: `"orthant"`, `"simplex"`, or
/// `{"A": .., "b": ..}`. Named sets take their dimension from the point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Named(String),
    Polyhedron(Polyhedron),
}

impl SetSpec {
    pub fn resolve(&self, dim: usize) -> Result<FeasibleSet> {
        let set = match self {
            SetSpec::Named(n) if n == "orthant" => FeasibleSet::Orthant(dim),
            SetSpec::Named(n) if n == "simplex" => FeasibleSet::Simplex(dim),
            SetSpec::Named(n) => {
                return Err(Error::Invalid(format!(
                    "unknown set '{n}', expected \"orthant\", \"simplex\" or {{\"A\", \"b\"}}"
                )))
            }
            SetSpec::Polyhedron(p) => FeasibleSet::Polyhedron(p.clone()),
        };
        if set.dim() != dim {
            return Err(Error::Dimension(format!(
                "set has dimension {}, point has {dim}",
                set.dim()
            )));
        }
        Ok(set)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
    Ok(s)
}

/// Parses JSON, reporting the line and column of the first error against
/// the file name.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        row: e.line(),
        field: format!("column {}", e.column()),
        message: e.to_string(),
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_to_string(path)?, &path.display().to_string())
}

pub fn read_problem(path: &Path) -> Result<ProblemFile> {
    let p: ProblemFile = read_json(path)?;
    check_schema(&match &p {
        ProblemFile::SpoPortfolio(f) => f.schema.clone(),
        ProblemFile::NewsvendorKernel(f) => f.schema.clone(),
    })?;
    Ok(p)
}

pub fn read_certificate(path: &Path) -> Result<Certificate> {
    let c: Certificate = read_json(path)?;
    check_schema(&c.schema)?;
    Ok(c)
}

fn check_schema(schema: &str) -> Result<()> {
    if schema != SCHEMA {
        return Err(Error::Invalid(format!(
            "unsupported schema '{schema}', expected '{SCHEMA}'"
        )));
    }
    Ok(())
}

/// Column positions of a `prefix_1, …, prefix_k` block, in index order.
fn numbered_columns(headers: &csv::StringRecord, prefix: &str, source: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (pos, h) in headers.iter().enumerate() {
        if let Some(rest) = h
            .trim()
            .strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('_'))
        {
            let k: usize = rest.parse().map_err(|_| Error::Parse {
                source_name: source.to_string(),
                row: 1,
                field: h.to_string(),
                message: format!("expected a header of the form {prefix}_<index>"),
            })?;
            found.push((k, pos));
        }
    }
    found.sort_unstable();
    for (expect, (k, _)) in (1..).zip(&found) {
        if *k != expect {
            return Err(Error::Parse {
                source_name: source.to_string(),
                row: 1,
                field: format!("{prefix}_{expect}"),
                message: "column missing from header".into(),
            });
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

struct CsvTable {
    source: String,
    headers: csv::StringRecord,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl CsvTable {
    fn read<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self {
            source: source.to_string(),
            headers,
            rows,
        })
    }

    fn value(&self, line: usize, rec: &csv::StringRecord, pos: usize) -> Result<f64> {
        let field = self.headers.get(pos).unwrap_or("?").to_string();
        let raw = rec.get(pos).unwrap_or("").trim();
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            source_name: self.source.clone(),
            row: line,
            field: field.clone(),
            message: format!("cannot parse '{raw}' as a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                source_name: self.source.clone(),
                row: line,
                field,
                message: "value is not finite".into(),
            });
        }
        Ok(v)
    }

    fn values(&self, line: usize, rec: &csv::StringRecord, cols: &[usize]) -> Result<Vec<f64>> {
        cols.iter().map(|&c| self.value(line, rec, c)).collect()
    }

    fn require(&self, cols: &[usize], prefix: &str) -> Result<()> {
        if cols.is_empty() {
            return Err(Error::Parse {
                source_name: self.source.clone(),
                row: 1,
                field: format!("{prefix}_1"),
                message: "header has no such columns".into(),
            });
        }
        Ok(())
    }
}

/// Portfolio samples from CSV with header `x_1..x_k, r_1..r_m` and an
/// optional `weight` column.
pub fn read_portfolio_csv<R: Read>(reader: R, source: &str) -> Result<Vec<PortfolioSample>> {
    let t = CsvTable::read(reader, source)?;
    let xs = numbered_columns(&t.headers, "x", source)?;
    let rs = numbered_columns(&t.headers, "r", source)?;
    t.require(&xs, "x")?;
    t.require(&rs, "r")?;
    let w = column(&t.headers, "weight");
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok(PortfolioSample {
                x: t.values(*line, rec, &xs)?,
                r: t.values(*line, rec, &rs)?,
                weight: w.map(|c| t.value(*line, rec, c)).transpose()?,
            })
        })
        .collect()
}

fn read_demand_rows<R: Read>(reader: R, source: &str) -> Result<Vec<DemandSample>> {
    let t = CsvTable::read(reader, source)?;
    let xs = numbered_columns(&t.headers, "x", source)?;
    t.require(&xs, "x")?;
    let y = column(&t.headers, "y").ok_or_else(|| Error::Parse {
        source_name: source.to_string(),
        row: 1,
        field: "y".into(),
        message: "header has no demand column".into(),
    })?;
    let w = column(&t.headers, "weight");
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok(DemandSample {
                x: t.values(*line, rec, &xs)?,
                y: t.value(*line, rec, y)?,
                weight: w.map(|c| t.value(*line, rec, c)).transpose()?,
            })
        })
        .collect()
}

/// Demand samples from CSV with header `x_1..x_k, y` and an optional
/// `weight` column.
pub fn read_demand_csv<R: Read>(reader: R, source: &str) -> Result<Vec<DemandSample>> {
    read_demand_rows(reader, source)
}

/// Kernel centers from CSV with header `x_1..x_k, y`.
pub fn read_centers_csv<R: Read>(reader: R, source: &str) -> Result<Vec<Center>> {
    Ok(read_demand_rows(reader, source)?
        .into_iter()
        .map(|s| Center { x: s.x, y: s.y })
        .collect())
}

pub fn open_csv(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn portfolio_problem_round_trips() {
        let text = r#"{"type":"spo_portfolio","sigma":[[1.0,0.0],[0.0,1.0]],"lambda":1.0,
            "samples":[{"x":[1.0],"r":[0.5,0.2]}]}"#;
        let p: ProblemFile = parse_json(text, "inline").unwrap();
        p.validate().unwrap();
        let back: ProblemFile = parse_json(&serde_json::to_string(&p).unwrap(), "again").unwrap();
        assert_eq!(p, back);
        assert_eq!(p.kind(), "spo_portfolio");
    }

    #[test]
    fn set_specs() {
        let s: SetSpec = parse_json("\"simplex\"", "s").unwrap();
        assert_eq!(s.resolve(3).unwrap(), FeasibleSet::Simplex(3));
        let s: SetSpec = parse_json(r#"{"A":[[1.0,0.0]],"b":[1.0]}"#, "s").unwrap();
        assert_eq!(s.resolve(2).unwrap().dim(), 2);
        assert!(s.resolve(3).is_err());
        let s: SetSpec = parse_json("\"cube\"", "s").unwrap();
        assert!(s.resolve(2).is_err());
    }

    #[test]
    fn newsvendor_bounds_default() {
        let text = r#"{"type":"newsvendor_kernel","h":1.0,"b":3.0,
            "centers":[{"x":[0.0],"y":5.0}],"samples":[{"x":[0.0],"y":4.0}]}"#;
        let ProblemFile::NewsvendorKernel(f) = parse_json(text, "inline").unwrap() else {
            panic!("wrong variant");
        };
        assert_eq!(f.instance.theta_bounds, [1e-3, 1e3]);
    }

    #[test]
    fn json_errors_carry_position() {
        let err = parse_json::<ProblemFile>(
            "{\n  \"type\": \"spo_portfolio\",\n  \"sigma\": oops\n}",
            "p.json",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("p.json") && err.contains("row 3"), "{err}");
    }

    #[test]
    fn csv_samples_and_diagnostics() {
        let ok = "x_1,x_2,r_1\n1,2,0.5\n3,4,0.25\n";
        let s = read_portfolio_csv(ok.as_bytes(), "s.csv").unwrap();
        assert_eq!(s[1].x, vec![3.0, 4.0]);
        assert_eq!(s[1].r, vec![0.25]);

        let bad = "x_1,r_1\n1,0.5\n2,abc\n";
        let err = read_portfolio_csv(bad.as_bytes(), "s.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 3") && err.contains("'r_1'"), "{err}");

        let gap = "x_1,x_3,r_1\n1,2,3\n";
        let err = read_portfolio_csv(gap.as_bytes(), "s.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("x_2"), "{err}");

        let centers = read_centers_csv("x_1,y\n0.5,3\n".as_bytes(), "c.csv").unwrap();
        assert_eq!(centers[0].y, 3.0);
        assert!(read_demand_csv("x_1,z\n0.5,3\n".as_bytes(), "c.csv").is_err());
    }
}
