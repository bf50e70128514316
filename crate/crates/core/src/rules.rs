//! Weighted rule templates and their grounding into hinge potentials.
//!
//! A template `body -> head` is read as the disjunction of the negated body
//! literals and the head literals. Under the Lukasiewicz relaxation a
//! disjunction with literal values `v_1..v_k` has distance to satisfaction
//! `max(0, 1 - sum v_i)`, which is linear in every target atom it mentions.
//! Observed literals fold into the constant term; target literals become
//! `+-1` coefficients.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomStore, CondSet, Predicate, TargetIndex, VertexSet};

/// Weight of the two-cycle rule.
pub const ACYCLICITY_WEIGHT: f64 = 10.0;
/// Weight of every other built-in rule.
pub const DEFAULT_WEIGHT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    J1,
    J2,
    J3,
    J4,
    J5,
    Ppi,
    /// User-supplied template.
    Custom(u32),
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::Ppi => f.write_str("PPI"),
            RuleId::Custom(i) => write!(f, "R{i}"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// Logical variable standing for a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    A,
    B,
    C,
}

impl Var {
    fn slot(self) -> usize {
        match self {
            Var::A => 0,
            Var::B => 1,
            Var::C => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    /// `predicate(x, y)` or, for conditional-test predicates, `predicate(x, y, S)`.
    Atom {
        predicate: Predicate,
        args: [Var; 2],
        negated: bool,
    },
    /// Structural membership test `InSet(v, S)`; never negated.
    InSet(Var),
}

impl Literal {
    pub fn pos(predicate: Predicate, x: Var, y: Var) -> Self {
        Literal::Atom {
            predicate,
            args: [x, y],
            negated: false,
        }
    }

    pub fn neg(predicate: Predicate, x: Var, y: Var) -> Self {
        Literal::Atom {
            predicate,
            args: [x, y],
            negated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTemplate {
    pub id: RuleId,
    pub weight: f64,
    pub body: Vec<Literal>,
    pub head: Vec<Literal>,
    /// Ground once per unordered `{A, B}` because swapping them yields the
    /// same potential.
    pub symmetric_pair: bool,
}

impl RuleTemplate {
    pub fn new(id: RuleId, weight: f64, body: Vec<Literal>, head: Vec<Literal>) -> Self {
        RuleTemplate {
            id,
            weight,
            body,
            head,
            symmetric_pair: false,
        }
    }

    fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.body.iter().chain(&self.head)
    }

    fn uses_c(&self) -> bool {
        self.literals().any(|l| match l {
            Literal::Atom { args, .. } => args.contains(&Var::C),
            Literal::InSet(v) => *v == Var::C,
        })
    }

    /// The variable required to be in `S`, if the template binds a set.
    fn set_member(&self) -> Option<Var> {
        self.literals().find_map(|l| match l {
            Literal::InSet(v) => Some(*v),
            _ => None,
        })
    }

    fn uses_set(&self) -> bool {
        self.set_member().is_some()
            || self.literals().any(|l| matches!(l, Literal::Atom { predicate, .. } if predicate.takes_cond_set()))
    }

    fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rule {} has non-positive weight {}",
                self.id, self.weight
            )));
        }
        if self.head.iter().any(|l| matches!(l, Literal::InSet(_))) {
            return Err(Error::InvalidParameter(format!("rule {}: InSet in head", self.id)));
        }
        if self.uses_set() && self.set_member().is_none() {
            return Err(Error::InvalidParameter(format!(
                "rule {}: conditioning set is never constrained by InSet",
                self.id
            )));
        }
        Ok(())
    }
}

/// Model variants: text-derived or test-derived adjacency, with or
/// without the joint ancestral rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "CausPSL")]
    CausPsl,
    #[serde(rename = "ObsPSL")]
    ObsPsl,
    #[serde(rename = "CausPSL-PC")]
    CausPslPc,
    #[serde(rename = "ObsPSL-PC")]
    ObsPslPc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::CausPsl, Variant::ObsPsl, Variant::CausPslPc, Variant::ObsPslPc];

    pub fn adjacency(self) -> Predicate {
        match self {
            Variant::CausPsl | Variant::CausPslPc => Predicate::TextAdj,
            Variant::ObsPsl | Variant::ObsPslPc => Predicate::StandardAdj,
        }
    }

    pub fn joint_rules(self) -> bool {
        matches!(self, Variant::CausPsl | Variant::ObsPsl)
    }

    pub fn uses_text(self) -> bool {
        self.adjacency() == Predicate::TextAdj
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::CausPsl => "CausPSL",
            Variant::ObsPsl => "ObsPSL",
            Variant::CausPslPc => "CausPSL-PC",
            Variant::ObsPslPc => "ObsPSL-PC",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// The built-in rule set for `variant`. The PPI rule is appended for
/// variants with joint rules when `with_ppi` is set.
pub fn builtin_rules(variant: Variant, with_ppi: bool) -> Vec<RuleTemplate> {
    use Predicate::{Anc, CondDep, CondIndep, Causes, Dep, LocalPpi};
    use Var::{A, B, C};
    let adj = variant.adjacency();
    let w = DEFAULT_WEIGHT;
    let pos = Literal::pos;
    let neg = Literal::neg;

    let v_structure_body = || {
        vec![
            pos(adj, A, B),
            pos(adj, C, B),
            neg(adj, A, C),
            pos(CondDep, A, C),
            Literal::InSet(B),
        ]
    };

    let mut rules = vec![
        RuleTemplate::new(RuleId::C1, w, vec![neg(adj, A, B)], vec![neg(Causes, A, B)]),
        RuleTemplate {
            symmetric_pair: true,
            ..RuleTemplate::new(
                RuleId::C2,
                ACYCLICITY_WEIGHT,
                vec![pos(Causes, A, B)],
                vec![neg(Causes, B, A)],
            )
        },
        RuleTemplate::new(RuleId::C3, w, v_structure_body(), vec![pos(Causes, A, B)]),
        RuleTemplate::new(RuleId::C4, w, v_structure_body(), vec![pos(Causes, C, B)]),
        RuleTemplate::new(
            RuleId::C5,
            w,
            vec![
                pos(Causes, A, B),
                pos(Dep, A, C),
                pos(CondIndep, A, C),
                Literal::InSet(B),
                pos(adj, B, C),
            ],
            vec![pos(Causes, B, C)],
        ),
        RuleTemplate::new(
            RuleId::C6,
            w,
            vec![pos(Causes, A, B), pos(Causes, B, C), pos(adj, A, C)],
            vec![pos(Causes, A, C)],
        ),
    ];
    if !variant.joint_rules() {
        return rules;
    }
    rules.extend([
        RuleTemplate::new(RuleId::J1, w, vec![pos(Causes, A, B)], vec![pos(Anc, A, B)]),
        RuleTemplate::new(RuleId::J2, w, vec![neg(Anc, A, B)], vec![neg(Causes, A, B)]),
        RuleTemplate::new(
            RuleId::J3,
            w,
            vec![pos(Anc, A, B), pos(Anc, B, C)],
            vec![pos(Anc, A, C)],
        ),
        RuleTemplate::new(
            RuleId::J4,
            w,
            vec![pos(Anc, A, B), pos(adj, A, B)],
            vec![pos(Causes, A, B)],
        ),
        RuleTemplate::new(
            RuleId::J5,
            w,
            vec![
                pos(adj, A, B),
                pos(adj, B, C),
                pos(Dep, A, C),
                pos(CondIndep, A, C),
                Literal::InSet(B),
                pos(Causes, B, A),
                neg(Anc, C, A),
            ],
            vec![pos(Causes, B, C)],
        ),
    ]);
    if with_ppi {
        rules.push(RuleTemplate::new(
            RuleId::Ppi,
            w,
            vec![pos(Anc, A, B), pos(LocalPpi, A, B)],
            vec![pos(Causes, A, B)],
        ));
    }
    rules
}

/// A grounded rule: `weight * max(0, constant + sum coeff * y[index])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPotential {
    pub rule: RuleId,
    pub weight: f64,
    /// Bound constants for A, B and (when used) C.
    pub args: Vec<usize>,
    /// Bound conditioning set, empty when the template has none.
    pub cond: CondSet,
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl GroundPotential {
    /// The linear function inside the hinge.
    pub fn linear(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * y[i]).sum::<f64>()
    }

    /// Distance to satisfaction, unweighted.
    pub fn distance(&self, y: &[f64]) -> f64 {
        self.linear(y).max(0.0)
    }

    /// Maximum of the linear part over the unit box.
    pub fn upper_bound(&self) -> f64 {
        self.constant + self.terms.iter().map(|&(_, c)| c.max(0.0)).sum::<f64>()
    }
}

struct Binding {
    vertices: [usize; 3],
    cond: CondSet,
}

impl Binding {
    fn get(&self, v: Var) -> usize {
        self.vertices[v.slot()]
    }
}

/// Candidate bindings of `(A, B[, C])`, in lexicographic order.
fn vertex_bindings(rule: &RuleTemplate, n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    if rule.uses_c() {
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                for c in (0..n).filter(|&c| c != a && c != b) {
                    out.push([a, b, c]);
                }
            }
        }
    } else {
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                if rule.symmetric_pair && b < a {
                    continue;
                }
                out.push([a, b, usize::MAX]);
            }
        }
    }
    out
}

/// Sets `S` with `member in S`, `S` disjoint from `exclude`, `|S| <= max_cond`.
fn set_bindings(n: usize, member: usize, exclude: &[usize], max_cond: usize) -> Vec<CondSet> {
    if max_cond == 0 {
        return Vec::new();
    }
    let mut skip = exclude.to_vec();
    skip.push(member);
    crate::model::enumerate_cond_sets(n, &skip, max_cond - 1)
        .into_iter()
        .map(|rest| {
            let mut m = rest.members().to_vec();
            m.push(member);
            CondSet::new(m).expect("member is excluded from the rest")
        })
        .collect()
}

/// Number of candidate bindings per template before pruning.
pub fn count_groundings(rules: &[RuleTemplate], n: usize, max_cond: usize) -> Vec<(RuleId, u64)> {
    rules
        .iter()
        .map(|rule| {
            let n64 = n as u64;
            let vertex = if rule.uses_c() {
                n64 * n64.saturating_sub(1) * n64.saturating_sub(2)
            } else if rule.symmetric_pair {
                n64 * n64.saturating_sub(1) / 2
            } else {
                n64 * n64.saturating_sub(1)
            };
            let sets = if rule.set_member().is_some() {
                // the set excludes the two tested endpoints and contains one fixed member
                let free = n.saturating_sub(3);
                (0..max_cond).map(|k| binomial(free as u64, k as u64)).sum::<u64>()
            } else {
                1
            };
            (rule.id, vertex * sets)
        })
        .collect()
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Accumulates one disjunction.
#[derive(Default)]
struct Disjunction {
    /// `1 - sum of observed literal values - number of negated target literals`.
    constant: f64,
    terms: Vec<(usize, f64)>,
}

impl Disjunction {
    fn new() -> Self {
        Disjunction {
            constant: 1.0,
            terms: Vec::new(),
        }
    }

    fn add_observed(&mut self, value: f64) {
        self.constant -= value;
    }

    /// Adds target `y` as a disjunct, negated (`1 - y`) or not.
    fn add_target(&mut self, index: usize, negated: bool) {
        let coeff = if negated {
            self.constant -= 1.0;
            1.0
        } else {
            -1.0
        };
        match self.terms.iter_mut().find(|(i, _)| *i == index) {
            Some(slot) => slot.1 += coeff,
            None => self.terms.push((index, coeff)),
        }
    }
}

struct Grounder<'a> {
    store: &'a AtomStore,
    index: &'a TargetIndex,
}

impl Grounder<'_> {
    /// Folds all literals except `InSet` and conditional-test atoms. Those
    /// depend on `S` and are added by `finish`.
    fn fixed_part(&self, rule: &RuleTemplate, binding: &Binding) -> Disjunction {
        let mut d = Disjunction::new();
        let literals = rule.body.iter().map(|l| (l, true)).chain(rule.head.iter().map(|l| (l, false)));
        for (lit, in_body) in literals {
            let Literal::Atom {
                predicate,
                args,
                negated,
            } = lit
            else {
                continue;
            };
            if predicate.takes_cond_set() {
                continue;
            }
            let (x, y) = (binding.get(args[0]), binding.get(args[1]));
            // a body literal appears negated in the disjunction
            let negated_in_disjunction = *negated != in_body;
            if predicate.is_target() {
                d.add_target(self.index.index_of(*predicate, x, y), negated_in_disjunction);
            } else {
                let v = self.store.pair_truth(*predicate, x, y);
                d.add_observed(if negated_in_disjunction { 1.0 - v } else { v });
            }
        }
        d
    }

    fn set_part(&self, rule: &RuleTemplate, binding: &Binding) -> f64 {
        let mut sum = 0.0;
        let literals = rule.body.iter().map(|l| (l, true)).chain(rule.head.iter().map(|l| (l, false)));
        for (lit, in_body) in literals {
            match lit {
                Literal::Atom {
                    predicate,
                    args,
                    negated,
                } if predicate.takes_cond_set() => {
                    let (x, y) = (binding.get(args[0]), binding.get(args[1]));
                    let v = self.store.truth(*predicate, x, y, &binding.cond);
                    sum += if *negated != in_body { 1.0 - v } else { v };
                }
                Literal::InSet(var) => {
                    // structural, always true for enumerated bindings: contributes 1 - 1 = 0
                    debug_assert!(binding.cond.contains(binding.get(*var)));
                }
                _ => {}
            }
        }
        sum
    }

    fn ground_rule(&self, rule: &RuleTemplate, max_cond: usize) -> Vec<GroundPotential> {
        let n = self.index.num_vertices();
        let uses_c = rule.uses_c();
        let member = rule.set_member();
        let set_endpoints = rule.literals().find_map(|l| match l {
            Literal::Atom { predicate, args, .. } if predicate.takes_cond_set() => Some(*args),
            _ => None,
        });
        let mut out = Vec::new();
        for vertices in vertex_bindings(rule, n) {
            let mut binding = Binding {
                vertices,
                cond: CondSet::empty(),
            };
            let fixed = self.fixed_part(rule, &binding);
            // Bound over the box is `constant + #negated targets`, i.e. one minus
            // the observed contributions; set literals can only lower it further.
            let bound = fixed.constant + fixed.terms.iter().map(|&(_, c)| c.max(0.0)).sum::<f64>();
            if bound <= 0.0 {
                continue;
            }
            let args: Vec<usize> = if uses_c {
                vertices.to_vec()
            } else {
                vertices[..2].to_vec()
            };
            match member {
                None => out.push(GroundPotential {
                    rule: rule.id,
                    weight: rule.weight,
                    args,
                    cond: CondSet::empty(),
                    constant: fixed.constant,
                    terms: fixed.terms,
                }),
                Some(var) => {
                    let exclude: Vec<usize> = set_endpoints
                        .map(|[x, y]| vec![binding.get(x), binding.get(y)])
                        .unwrap_or_default();
                    let m = binding.get(var);
                    if exclude.contains(&m) {
                        continue;
                    }
                    for cond in set_bindings(n, m, &exclude, max_cond) {
                        binding.cond = cond;
                        let constant = fixed.constant - self.set_part(rule, &binding);
                        let potential = GroundPotential {
                            rule: rule.id,
                            weight: rule.weight,
                            args: args.clone(),
                            cond: binding.cond.clone(),
                            constant,
                            terms: fixed.terms.clone(),
                        };
                        if potential.upper_bound() > 0.0 {
                            out.push(potential);
                        }
                    }
                }
            }
        }
        out.retain(|p| p.upper_bound() > 0.0);
        out
    }
}

/// Grounds `rules` against observed atoms, dropping potentials that are
/// satisfied everywhere on the unit box. Output is ordered by template,
/// then by binding.
pub fn ground(
    rules: &[RuleTemplate],
    store: &AtomStore,
    index: &TargetIndex,
    max_cond: usize,
) -> Result<Vec<GroundPotential>> {
    for rule in rules {
        rule.validate()?;
    }
    let grounder = Grounder { store, index };
    let per_rule: Vec<Vec<GroundPotential>> = rules
        .par_iter()
        .map(|rule| grounder.ground_rule(rule, max_cond))
        .collect();
    Ok(per_rule.into_iter().flatten().collect())
}

/// Writes the ground program: rule, bound constants, set, weight, constant, terms.
pub fn write_ground_tsv<W: Write>(
    potentials: &[GroundPotential],
    vertices: &VertexSet,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "rule\targs\tcond\tweight\tconstant\tterms")?;
    for p in potentials {
        let args: Vec<&str> = p.args.iter().map(|&v| vertices.name(v)).collect();
        let cond: Vec<&str> = p.cond.members().iter().map(|&v| vertices.name(v)).collect();
        let terms: Vec<String> = p.terms.iter().map(|(i, c)| format!("{i}:{c}")).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:e}\t{}",
            p.rule,
            args.join(","),
            cond.join("|"),
            p.weight,
            p.constant,
            terms.join(" ")
        )?;
    }
    Ok(())
}
