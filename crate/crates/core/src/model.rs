//! Vertices, predicates, atoms and conditioning sets.
//!
//! Every other module speaks in terms of vertex ordinals (`usize` in
//! `0..n`). Names only appear at the I/O boundary through [`VertexSet`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on conditioning-set size.
pub const DEFAULT_MAX_COND: usize = 2;

/// Ordered, duplicate-free collection of named vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VertexSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidVertexSet(format!("empty name at position {i}")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidVertexSet(format!("duplicate name '{name}'")));
            }
        }
        Ok(VertexSet { names, index })
    }

    /// Vertices named `prefix0`, `prefix1`, ...
    pub fn numbered(prefix: &str, n: usize) -> Self {
        Self::new((0..n).map(|i| format!("{prefix}{i}"))).expect("generated names are unique")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, ordinal: usize) -> &str {
        &self.names[ordinal]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ordinal(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// A conditioning set: strictly ascending vertex ordinals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CondSet(Vec<usize>);

impl CondSet {
    pub fn empty() -> Self {
        CondSet(Vec::new())
    }

    /// Builds a set from arbitrary ordinals, sorting them. Duplicates are rejected.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateVertex(w[0]));
        }
        Ok(CondSet(members))
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }
}

impl fmt::Display for CondSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// All subsets of `0..n` minus `exclude` with size at most `max_size`,
/// ordered by size and then lexicographically.
pub fn enumerate_cond_sets(n: usize, exclude: &[usize], max_size: usize) -> Vec<CondSet> {
    let pool: Vec<usize> = (0..n).filter(|v| !exclude.contains(v)).collect();
    let mut out = Vec::new();
    for size in 0..=max_size.min(pool.len()) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(CondSet(combo.iter().map(|&i| pool[i]).collect()));
            // advance to the next combination in lexicographic order
            let mut i = size;
            while i > 0 && combo[i - 1] == pool.len() - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    Dep,
    Indep,
    CondDep,
    CondIndep,
    InSet,
    TextAdj,
    StandardAdj,
    LocalPpi,
    Causes,
    Anc,
}

impl Predicate {
    /// Whether swapping the two vertex arguments denotes the same atom.
    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            Predicate::Dep
                | Predicate::Indep
                | Predicate::CondDep
                | Predicate::CondIndep
                | Predicate::TextAdj
                | Predicate::StandardAdj
                | Predicate::LocalPpi
        )
    }

    /// Target predicates are inferred; everything else is observed.
    pub fn is_target(self) -> bool {
        matches!(self, Predicate::Causes | Predicate::Anc)
    }

    pub fn takes_cond_set(self) -> bool {
        matches!(self, Predicate::CondDep | Predicate::CondIndep)
    }

    pub fn name(self) -> &'static str {
        match self {
            Predicate::Dep => "Dep",
            Predicate::Indep => "Indep",
            Predicate::CondDep => "CondDep",
            Predicate::CondIndep => "CondIndep",
            Predicate::InSet => "InSet",
            Predicate::TextAdj => "TextAdj",
            Predicate::StandardAdj => "StandardAdj",
            Predicate::LocalPpi => "LocalPPI",
            Predicate::Causes => "Causes",
            Predicate::Anc => "Anc",
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A ground atom with a known truth value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedAtom {
    pub predicate: Predicate,
    pub a: usize,
    pub b: usize,
    pub cond: CondSet,
    pub truth: f64,
}

impl ObservedAtom {
    pub fn key(&self) -> AtomKey {
        AtomKey {
            predicate: self.predicate,
            a: self.a,
            b: self.b,
            cond: self.cond.clone(),
        }
    }
}

impl fmt::Display for ObservedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.cond.is_empty() {
            write!(f, "{}({}, {}) = {}", self.predicate, self.a, self.b, self.truth)
        } else {
            write!(
                f,
                "{}({}, {}, {}) = {}",
                self.predicate, self.a, self.b, self.cond, self.truth
            )
        }
    }
}

/// Validates an atom and puts symmetric predicates into ascending argument order.
///
/// ```
/// use causal_psl::model::{canonical_atom, CondSet, Predicate};
/// let atom = canonical_atom(Predicate::Dep, 3, 1, CondSet::empty(), 0.9, 4).unwrap();
/// assert_eq!((atom.a, atom.b), (1, 3));
/// ```
pub fn canonical_atom(
    predicate: Predicate,
    a: usize,
    b: usize,
    cond: CondSet,
    truth: f64,
    n: usize,
) -> Result<ObservedAtom> {
    for v in [a, b].iter().chain(cond.members()) {
        if *v >= n {
            return Err(Error::VertexOutOfRange { ordinal: *v, n });
        }
    }
    if a == b {
        return Err(Error::DuplicateVertex(a));
    }
    if let Some(&v) = [a, b].iter().find(|v| cond.contains(**v)) {
        return Err(Error::CondSetContainsEndpoint(v));
    }
    if !(0.0..=1.0).contains(&truth) {
        return Err(Error::TruthOutOfRange(truth));
    }
    let (a, b) = if predicate.is_symmetric() && a > b {
        (b, a)
    } else {
        (a, b)
    };
    Ok(ObservedAtom {
        predicate,
        a,
        b,
        cond,
        truth,
    })
}

/// Lookup key of an observed atom. Symmetric predicates must be keyed in
/// canonical order; [`AtomStore::truth`] handles that for callers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomKey {
    pub predicate: Predicate,
    pub a: usize,
    pub b: usize,
    pub cond: CondSet,
}

/// Closed-world store of observed truth values: absent atoms are 0.
#[derive(Debug, Clone, Default)]
pub struct AtomStore {
    values: HashMap<AtomKey, f64>,
}

impl AtomStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an atom, replacing any previous value for the same key.
    pub fn insert(&mut self, atom: &ObservedAtom) {
        self.values.insert(atom.key(), atom.truth);
    }

    pub fn extend<'a>(&mut self, atoms: impl IntoIterator<Item = &'a ObservedAtom>) {
        for atom in atoms {
            self.insert(atom);
        }
    }

    pub fn truth(&self, predicate: Predicate, a: usize, b: usize, cond: &CondSet) -> f64 {
        let (a, b) = if predicate.is_symmetric() && a > b {
            (b, a)
        } else {
            (a, b)
        };
        // The key owns its CondSet; avoid cloning for the common marginal case.
        let key = AtomKey {
            predicate,
            a,
            b,
            cond: if cond.is_empty() {
                CondSet::empty()
            } else {
                cond.clone()
            },
        };
        self.values.get(&key).copied().unwrap_or(0.0)
    }

    pub fn pair_truth(&self, predicate: Predicate, a: usize, b: usize) -> f64 {
        self.truth(predicate, a, b, &CondSet::empty())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All stored atoms with the given predicate, sorted by key.
    pub fn atoms_of(&self, predicate: Predicate) -> Vec<ObservedAtom> {
        let mut out: Vec<ObservedAtom> = self
            .values
            .iter()
            .filter(|(k, _)| k.predicate == predicate)
            .map(|(k, &truth)| ObservedAtom {
                predicate: k.predicate,
                a: k.a,
                b: k.b,
                cond: k.cond.clone(),
                truth,
            })
            .collect();
        out.sort_by(|x, y| x.key().cmp(&y.key()));
        out
    }
}

/// An inferred `Causes` or `Anc` atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetAtom {
    pub predicate: Predicate,
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

/// Dense indexing of target atoms: all `Causes(a, b)` for ordered pairs
/// `a != b` in lexicographic order, followed by all `Anc(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetIndex {
    n: usize,
}

impl TargetIndex {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewVertices(n));
        }
        Ok(TargetIndex { n })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        2 * self.pairs()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn pairs(&self) -> usize {
        self.n * (self.n - 1)
    }

    fn pair_offset(&self, from: usize, to: usize) -> usize {
        debug_assert!(from != to && from < self.n && to < self.n);
        from * (self.n - 1) + if to < from { to } else { to - 1 }
    }

    pub fn causes(&self, from: usize, to: usize) -> usize {
        self.pair_offset(from, to)
    }

    pub fn anc(&self, from: usize, to: usize) -> usize {
        self.pairs() + self.pair_offset(from, to)
    }

    pub fn index_of(&self, predicate: Predicate, from: usize, to: usize) -> usize {
        match predicate {
            Predicate::Causes => self.causes(from, to),
            Predicate::Anc => self.anc(from, to),
            other => panic!("{other} is not a target predicate"),
        }
    }

    /// Inverse of [`TargetIndex::index_of`].
    pub fn atom_at(&self, index: usize) -> (Predicate, usize, usize) {
        let (predicate, offset) = if index < self.pairs() {
            (Predicate::Causes, index)
        } else {
            (Predicate::Anc, index - self.pairs())
        };
        let from = offset / (self.n - 1);
        let r = offset % (self.n - 1);
        let to = if r < from { r } else { r + 1 };
        (predicate, from, to)
    }
}

/// All target atoms for `n` vertices in [`TargetIndex`] order, valued 0.
pub fn enumerate_targets(vertices: &VertexSet) -> Result<Vec<TargetAtom>> {
    let index = TargetIndex::new(vertices.len())?;
    Ok((0..index.len())
        .map(|i| {
            let (predicate, from, to) = index.atom_at(i);
            TargetAtom {
                predicate,
                from,
                to,
                value: 0.0,
            }
        })
        .collect())
}
