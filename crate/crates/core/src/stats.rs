//! Correlation-based conditional independence testing.
//!
//! Marginal and partial Pearson correlations are turned into p-values with
//! Fisher's z-transform, then binned into `Dep`/`Indep`/`CondDep`/`CondIndep`
//! atoms. Partial correlations use the first-order recursion, which is exact
//! for the small conditioning sets used here.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::{enumerate_cond_sets, CondSet, ObservedAtom, Predicate, VertexSet};

/// Recursion denominators below this are treated as degenerate conditioning.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Observational data: `m` rows (samples) by `n` columns (vertices).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    m: usize,
}

impl Dataset {
    /// Builds a dataset from per-vertex columns.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || m == 0 {
            return Err(Error::InvalidDataset("no data".into()));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != m {
                return Err(Error::InvalidDataset(format!(
                    "column {j} has {} rows, expected {m}",
                    col.len()
                )));
            }
            if let Some(x) = col.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!("column {j} has non-finite value {x}")));
            }
        }
        Ok(Dataset { columns, m })
    }

    /// Builds a dataset from row-major observations.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} values, expected {n}",
                    row.len()
                )));
            }
            for (col, &x) in columns.iter_mut().zip(row) {
                col.push(x);
            }
        }
        Self::from_columns(columns)
    }

    /// Reads a CSV whose header row names the vertices.
    pub fn read_csv(path: &Path) -> Result<(VertexSet, Dataset)> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        let vertices = VertexSet::new(headers.iter().map(str::to_string))?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let row = record
                .iter()
                .map(|field| field.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: i + 2,
                    reason: e.to_string(),
                })?;
            rows.push(row);
        }
        let data = Dataset::from_rows(&rows)?;
        if data.n() != vertices.len() {
            return Err(Error::InvalidDataset(format!(
                "{}: header names {} vertices but rows have {}",
                path.display(),
                vertices.len(),
                data.n()
            )));
        }
        Ok((vertices, data))
    }

    /// Writes the dataset as CSV with a header row.
    pub fn write_csv<W: Write>(&self, vertices: &VertexSet, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let wrap = |source| Error::Csv {
            path: "<output>".into(),
            source,
        };
        writer.write_record(vertices.names()).map_err(wrap)?;
        for i in 0..self.m {
            writer
                .write_record(self.columns.iter().map(|c| format!("{:.17e}", c[i])))
                .map_err(wrap)?;
        }
        writer.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }
}

/// Symmetric matrix of pairwise Pearson correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CorrMatrix {
    /// Wraps a row-major `n x n` matrix. No validation beyond shape.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(CorrMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

pub fn correlation_matrix(data: &Dataset) -> Result<CorrMatrix> {
    let n = data.n();
    let m = data.m() as f64;
    let centered: Vec<Vec<f64>> = data
        .columns
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / m;
            col.iter().map(|x| x - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    for (j, norm) in norms.iter().enumerate() {
        if *norm <= f64::EPSILON * m.sqrt() {
            return Err(Error::ZeroVariance(format!("column {j}")));
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(x, y)| x * y).sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            out[i * n + j] = r;
            out[j * n + i] = r;
        }
    }
    Ok(CorrMatrix { n, data: out })
}

/// Partial correlation of `a` and `b` given `cond`, by recursing on the
/// last member of the conditioning set.
pub fn partial_correlation(corr: &CorrMatrix, a: usize, b: usize, cond: &CondSet) -> Result<f64> {
    if a == b {
        return Err(Error::DuplicateVertex(a));
    }
    if let Some(&v) = [a, b].iter().find(|v| cond.contains(**v)) {
        return Err(Error::CondSetContainsEndpoint(v));
    }
    partial_rec(corr, a, b, cond.members()).map(|r| r.clamp(-1.0, 1.0))
}

fn partial_rec(corr: &CorrMatrix, a: usize, b: usize, cond: &[usize]) -> Result<f64> {
    let Some((&c, rest)) = cond.split_last() else {
        return Ok(corr.get(a, b));
    };
    let r_ab = partial_rec(corr, a, b, rest)?;
    let r_ac = partial_rec(corr, a, c, rest)?;
    let r_bc = partial_rec(corr, b, c, rest)?;
    let da = 1.0 - r_ac * r_ac;
    let db = 1.0 - r_bc * r_bc;
    if da <= DENOMINATOR_FLOOR {
        return Err(Error::DegenerateConditioning(a, c));
    }
    if db <= DENOMINATOR_FLOOR {
        return Err(Error::DegenerateConditioning(b, c));
    }
    Ok((r_ab - r_ac * r_bc) / (da * db).sqrt())
}

/// Fisher's z statistic and two-sided p-value for a (partial) correlation
/// `r` estimated from `m` samples with a conditioning set of size `s`.
///
/// ```
/// let (z, p) = causal_psl::stats::fisher_z(0.0, 100, 0).unwrap();
/// assert_eq!((z, p), (0.0, 1.0));
/// ```
pub fn fisher_z(r: f64, m: usize, s: usize) -> Result<(f64, f64)> {
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(Error::SaturatedCorrelation(r.abs()));
    }
    if m < s + 4 {
        return Err(Error::InsufficientSamples { m, s });
    }
    let z = r.atanh() * ((m - s - 3) as f64).sqrt();
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok((z, p))
}

/// One independence test between `a` and `b` given `cond`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub a: usize,
    pub b: usize,
    pub cond: CondSet,
    pub r: f64,
    pub z: f64,
    pub p: f64,
}

/// Runs every test for every unordered pair and every conditioning set of
/// size at most `max_cond`. Pairs come out in lexicographic order; within a
/// pair, sets are ordered by size and then lexicographically.
pub fn run_all_tests(data: &Dataset, max_cond: usize) -> Result<Vec<TestResult>> {
    let n = data.n();
    if data.m() <= max_cond + 3 {
        return Err(Error::InsufficientSamples {
            m: data.m(),
            s: max_cond,
        });
    }
    let corr = correlation_matrix(data)?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    let per_pair: Vec<Vec<TestResult>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            enumerate_cond_sets(n, &[a, b], max_cond)
                .into_iter()
                .map(|cond| {
                    let r = partial_correlation(&corr, a, b, &cond)?;
                    // a sample partial correlation of exactly +-1 is saturated;
                    // pull it just inside so the test reports maximal dependence
                    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    let (z, p) = fisher_z(r, data.m(), cond.len())?;
                    Ok(TestResult { a, b, cond, r, z, p })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_pair.into_iter().flatten().collect())
}

/// How test outcomes become truth values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub alpha: f64,
    /// Map independence truths `p` to `p^(1/3)`.
    pub skew_rescale: bool,
}

impl Binning {
    pub fn new(alpha: f64) -> Self {
        Binning {
            alpha,
            skew_rescale: true,
        }
    }
}

/// Classifies each test at level `alpha`: `p <= alpha` is dependent with
/// truth `1 - p`; otherwise independent with truth `p` (or its cube root).
pub fn bin_tests(tests: &[TestResult], binning: Binning) -> Result<Vec<ObservedAtom>> {
    if !(binning.alpha > 0.0 && binning.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {}",
            binning.alpha
        )));
    }
    Ok(tests.iter().map(|t| bin_one(t, binning)).collect())
}

fn bin_one(t: &TestResult, binning: Binning) -> ObservedAtom {
    let marginal = t.cond.is_empty();
    let (predicate, truth) = if t.p <= binning.alpha {
        let pred = if marginal {
            Predicate::Dep
        } else {
            Predicate::CondDep
        };
        (pred, 1.0 - t.p)
    } else {
        let pred = if marginal {
            Predicate::Indep
        } else {
            Predicate::CondIndep
        };
        let truth = if binning.skew_rescale { t.p.cbrt() } else { t.p };
        (pred, truth)
    };
    ObservedAtom {
        predicate,
        a: t.a.min(t.b),
        b: t.a.max(t.b),
        cond: t.cond.clone(),
        truth: truth.clamp(0.0, 1.0),
    }
}

/// `StandardAdj(a, b)` is 1 when `a` and `b` are marginally dependent and
/// no conditioning set renders them independent, 0 otherwise. One atom is
/// emitted for every unordered pair of `0..n`.
pub fn standard_adjacency(atoms: &[ObservedAtom], n: usize) -> Result<Vec<ObservedAtom>> {
    let idx = |a: usize, b: usize| a * n + b;
    let mut marginal_dep: Vec<Option<bool>> = vec![None; n * n];
    let mut separated = vec![false; n * n];
    for atom in atoms {
        let (a, b) = (atom.a.min(atom.b), atom.a.max(atom.b));
        match atom.predicate {
            Predicate::Dep => marginal_dep[idx(a, b)] = Some(true),
            Predicate::Indep => marginal_dep[idx(a, b)] = Some(false),
            Predicate::CondIndep => separated[idx(a, b)] = true,
            _ => {}
        }
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            let dep = marginal_dep[idx(a, b)].ok_or(Error::MissingMarginalTest(a, b))?;
            let adjacent = dep && !separated[idx(a, b)];
            out.push(ObservedAtom {
                predicate: Predicate::StandardAdj,
                a,
                b,
                cond: CondSet::empty(),
                truth: if adjacent { 1.0 } else { 0.0 },
            });
        }
    }
    Ok(out)
}

fn cond_names(cond: &CondSet, vertices: &VertexSet) -> String {
    cond.members()
        .iter()
        .map(|&v| vertices.name(v))
        .collect::<Vec<_>>()
        .join("|")
}

/// Writes the test dump: `a, b, cond, r, z, p` with `|`-joined set names.
pub fn write_tests_tsv<W: Write>(tests: &[TestResult], vertices: &VertexSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "a\tb\tcond\tr\tz\tp")?;
    for t in tests {
        writeln!(
            out,
            "{}\t{}\t{}\t{:e}\t{:e}\t{:e}",
            vertices.name(t.a),
            vertices.name(t.b),
            cond_names(&t.cond, vertices),
            t.r,
            t.z,
            t.p
        )?;
    }
    Ok(())
}

/// Writes observed atoms as `predicate, a, b, cond, truth`.
pub fn write_atoms_tsv<W: Write>(atoms: &[ObservedAtom], vertices: &VertexSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "predicate\ta\tb\tcond\ttruth")?;
    for atom in atoms {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:e}",
            atom.predicate,
            vertices.name(atom.a),
            vertices.name(atom.b),
            cond_names(&atom.cond, vertices),
            atom.truth
        )?;
    }
    Ok(())
}
