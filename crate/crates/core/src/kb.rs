//! Knowledge-base evidence: pairwise affinity scores and protein-protein
//! interaction edges.
//!
//! Both file formats are whitespace/tab separated with `#` comments.
//! Affinity rows are `geneA geneB score`; PPI rows are `geneA geneB`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CondSet, ObservedAtom, Predicate, VertexSet};

/// Native score scale of STRING-style affinity files.
pub const DEFAULT_SCALE_MAX: f64 = 1000.0;

/// How raw affinity scores are normalized into truth values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMax {
    /// Divide by a fixed value.
    Fixed(f64),
    /// Divide by the largest score present.
    FileMax,
}

impl Default for ScaleMax {
    fn default() -> Self {
        ScaleMax::Fixed(DEFAULT_SCALE_MAX)
    }
}

/// Raw affinity scores keyed by canonical (ascending) vertex pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KbEvidence {
    pub affinities: BTreeMap<(usize, usize), f64>,
    pub scale_max: ScaleMax,
    /// Rows skipped because they named vertices outside the instance.
    #[serde(default)]
    pub skipped_rows: usize,
}

impl KbEvidence {
    /// Inserts a score for an unordered pair, keeping the maximum on repeats.
    pub fn insert(&mut self, a: usize, b: usize, raw: f64) {
        let key = (a.min(b), a.max(b));
        let slot = self.affinities.entry(key).or_insert(raw);
        if raw > *slot {
            *slot = raw;
        }
    }

    pub fn raw(&self, a: usize, b: usize) -> f64 {
        self.affinities
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0.0)
    }

    /// The divisor in effect.
    pub fn divisor(&self) -> f64 {
        match self.scale_max {
            ScaleMax::Fixed(v) => v,
            ScaleMax::FileMax => self.affinities.values().copied().fold(0.0, f64::max),
        }
    }

    /// Writes the affinities as `geneA geneB score` rows.
    pub fn write_tsv<W: Write>(&self, vertices: &VertexSet, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# geneA\tgeneB\tscore")?;
        for (&(a, b), raw) in &self.affinities {
            writeln!(out, "{}\t{}\t{}", vertices.name(a), vertices.name(b), raw)?;
        }
        Ok(())
    }
}

/// Splits a data file into non-comment rows of fields, tagged with 1-based line numbers.
fn rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            Some((i + 1, line.split_whitespace().map(str::to_string).collect()))
        })
        .collect())
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

pub fn load_affinities(path: &Path, vertices: &VertexSet, scale_max: ScaleMax) -> Result<KbEvidence> {
    let mut kb = KbEvidence {
        scale_max,
        ..Default::default()
    };
    for (line, fields) in rows(path)? {
        if fields.len() != 3 {
            return Err(malformed(path, line, format!("expected 3 columns, found {}", fields.len())));
        }
        let raw: f64 = fields[2]
            .parse()
            .map_err(|_| malformed(path, line, format!("non-numeric score '{}'", fields[2])))?;
        if !raw.is_finite() || raw < 0.0 {
            return Err(malformed(path, line, format!("score must be a nonnegative number, got {raw}")));
        }
        match (vertices.ordinal(&fields[0]), vertices.ordinal(&fields[1])) {
            (Some(a), Some(b)) if a != b => kb.insert(a, b, raw),
            (Some(_), Some(_)) => return Err(malformed(path, line, "self-pair")),
            _ => kb.skipped_rows += 1,
        }
    }
    if kb.skipped_rows > 0 {
        warn!("{}: skipped {} rows naming unknown vertices", path.display(), kb.skipped_rows);
    }
    Ok(kb)
}

/// `TextAdj(a, b) = min(1, raw / scale)` for every pair with a positive score.
pub fn to_textadj(kb: &KbEvidence) -> Result<Vec<ObservedAtom>> {
    let scale = kb.divisor();
    if kb.affinities.values().any(|&r| r > 0.0) && !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!("affinity scale must be positive, got {scale}")));
    }
    if let ScaleMax::Fixed(v) = kb.scale_max {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("affinity scale must be positive, got {v}")));
        }
    }
    Ok(kb
        .affinities
        .iter()
        .filter(|(_, &raw)| raw > 0.0)
        .map(|(&(a, b), &raw)| ObservedAtom {
            predicate: Predicate::TextAdj,
            a,
            b,
            cond: CondSet::empty(),
            truth: (raw / scale).min(1.0),
        })
        .collect())
}

/// Loads undirected PPI edges as `LocalPPI` atoms with truth 1.
pub fn load_ppi(path: &Path, vertices: &VertexSet) -> Result<Vec<ObservedAtom>> {
    let mut edges = BTreeSet::new();
    let mut skipped = 0usize;
    for (line, fields) in rows(path)? {
        if fields.len() != 2 {
            return Err(malformed(path, line, format!("expected 2 columns, found {}", fields.len())));
        }
        match (vertices.ordinal(&fields[0]), vertices.ordinal(&fields[1])) {
            (Some(a), Some(b)) if a != b => {
                edges.insert((a.min(b), a.max(b)));
            }
            (Some(_), Some(_)) => return Err(malformed(path, line, "self-pair")),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} rows naming unknown vertices", path.display());
    }
    Ok(edges
        .into_iter()
        .map(|(a, b)| ObservedAtom {
            predicate: Predicate::LocalPpi,
            a,
            b,
            cond: CondSet::empty(),
            truth: 1.0,
        })
        .collect())
}
