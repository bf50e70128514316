//! Synthetic ground truth: random DAGs, linear-Gaussian data, a
//! d-separation oracle and knowledge-base corruption with controlled
//! precision and recall.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KbEvidence, ScaleMax, DEFAULT_SCALE_MAX};
use crate::model::{enumerate_cond_sets, CondSet, ObservedAtom, Predicate};
use crate::stats::Dataset;

/// Smallest edge-weight magnitude.
pub const MIN_EDGE_WEIGHT: f64 = 0.4;
/// Largest edge-weight magnitude.
pub const MAX_EDGE_WEIGHT: f64 = 0.9;
/// Lower bound on a vertex's noise variance.
const MIN_NOISE_VARIANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDag {
    pub n: usize,
    /// Generating topological order.
    pub order: Vec<usize>,
    /// Directed edges sorted lexicographically.
    pub edges: Vec<(usize, usize)>,
    /// Weight of each edge, aligned with `edges`.
    pub weights: Vec<f64>,
    /// Noise standard deviation per vertex.
    pub noise: Vec<f64>,
    pub seed: u64,
}

impl SynthDag {
    /// Builds a DAG from explicit edges and weights. Noise scales are chosen
    /// so every vertex has unit marginal variance where possible.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = edges.to_vec();
        sorted.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        for &(a, b, _) in &sorted {
            if a >= n || b >= n {
                return Err(Error::VertexOutOfRange { ordinal: a.max(b), n });
            }
            if a == b {
                return Err(Error::DuplicateVertex(a));
            }
        }
        if sorted.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidParameter("duplicate edge".into()));
        }
        let pairs: Vec<(usize, usize)> = sorted.iter().map(|e| (e.0, e.1)).collect();
        let order = topological_order(n, &pairs)
            .ok_or_else(|| Error::InvalidParameter("edges contain a cycle".into()))?;
        let weights: Vec<f64> = sorted.iter().map(|e| e.2).collect();
        let noise = unit_variance_noise(n, &order, &pairs, &weights);
        Ok(SynthDag {
            n,
            order,
            edges: pairs,
            weights,
            noise,
            seed: 0,
        })
    }

    pub fn parents(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges
            .iter()
            .zip(&self.weights)
            .filter(move |((_, b), _)| *b == v)
            .map(|((a, _), w)| (*a, *w))
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(a, _)| *a == v).map(|(_, b)| *b)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a, b)).is_ok()
    }

    /// Undirected edge set, each pair in ascending order.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }
}

/// Kahn's algorithm; `None` when the edges contain a cycle.
pub fn topological_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    for &(_, b) in edges {
        indegree[b] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(a, b) in edges {
            if a == v {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    queue.push_back(b);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Noise standard deviations giving each vertex unit implied variance,
/// floored at `MIN_NOISE_VARIANCE`.
fn unit_variance_noise(n: usize, order: &[usize], edges: &[(usize, usize)], weights: &[f64]) -> Vec<f64> {
    let mut cov = vec![0.0; n * n];
    let mut noise = vec![1.0; n];
    let mut done: Vec<usize> = Vec::with_capacity(n);
    for &v in order {
        let parents: Vec<(usize, f64)> = edges
            .iter()
            .zip(weights)
            .filter(|((_, b), _)| *b == v)
            .map(|((a, _), w)| (*a, *w))
            .collect();
        let mut signal = 0.0;
        for &(p, wp) in &parents {
            for &(q, wq) in &parents {
                signal += wp * wq * cov[p * n + q];
            }
        }
        let noise_var = (1.0 - signal).max(MIN_NOISE_VARIANCE);
        noise[v] = noise_var.sqrt();
        for &k in &done {
            let c: f64 = parents.iter().map(|&(p, w)| w * cov[p * n + k]).sum();
            cov[v * n + k] = c;
            cov[k * n + v] = c;
        }
        cov[v * n + v] = signal + noise_var;
        done.push(v);
    }
    noise
}

/// Random DAG over a uniformly shuffled topological order; each forward
/// pair becomes an edge with probability `edge_prob`.
pub fn sample_dag(n: usize, edge_prob: f64, seed: u64) -> Result<SynthDag> {
    if n < 2 {
        return Err(Error::TooFewVertices(n));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidParameter(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < edge_prob {
                let magnitude = rng.random_range(MIN_EDGE_WEIGHT..=MAX_EDGE_WEIGHT);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                edges.push((order[i], order[j], sign * magnitude));
            }
        }
    }
    let mut dag = SynthDag::from_edges(n, &edges)?;
    dag.order = order;
    dag.seed = seed;
    Ok(dag)
}

/// Draws `m` independent samples from the linear-Gaussian SEM of `dag`
/// and standardizes every column.
pub fn simulate_sem(dag: &SynthDag, m: usize, seed: u64) -> Result<Dataset> {
    if m <= 10 {
        return Err(Error::InvalidParameter(format!("need more than 10 samples, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents: Vec<Vec<(usize, f64)>> = (0..dag.n).map(|v| dag.parents(v).collect()).collect();
    let mut columns = vec![vec![0.0; m]; dag.n];
    for i in 0..m {
        for &v in &dag.order {
            let noise: f64 = rng.sample(StandardNormal);
            let signal: f64 = parents[v].iter().map(|&(p, w)| w * columns[p][i]).sum();
            columns[v][i] = signal + dag.noise[v] * noise;
        }
    }
    for col in &mut columns {
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt();
        for x in col.iter_mut() {
            *x = (*x - mean) / sd;
        }
    }
    Dataset::from_columns(columns)
}

/// Whether `a` and `b` are d-separated by `cond` in `dag`, via reachability
/// over (vertex, direction) states.
pub fn d_separation(dag: &SynthDag, a: usize, b: usize, cond: &CondSet) -> bool {
    let n = dag.n;
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for &(x, y) in &dag.edges {
        parents[y].push(x);
        children[x].push(y);
    }
    // vertices that are in the conditioning set or have a descendant in it
    let mut opens_collider = vec![false; n];
    let mut stack: Vec<usize> = cond.members().to_vec();
    while let Some(v) = stack.pop() {
        if !opens_collider[v] {
            opens_collider[v] = true;
            stack.extend(&parents[v]);
        }
    }
    // direction: true = arrived from a child (travelling up), false = from a parent
    let mut visited = vec![[false; 2]; n];
    let mut queue = VecDeque::from([(a, true)]);
    while let Some((v, up)) = queue.pop_front() {
        if visited[v][up as usize] {
            continue;
        }
        visited[v][up as usize] = true;
        let observed = cond.contains(v);
        if v == b && !observed {
            return false;
        }
        if up && !observed {
            queue.extend(parents[v].iter().map(|&p| (p, true)));
            queue.extend(children[v].iter().map(|&c| (c, false)));
        } else if !up {
            if !observed {
                queue.extend(children[v].iter().map(|&c| (c, false)));
            }
            if opens_collider[v] {
                queue.extend(parents[v].iter().map(|&p| (p, true)));
            }
        }
    }
    true
}

/// Noise-free evidence: one test atom per pair and conditioning set (truth 1
/// on the d-separation verdict) plus `TextAdj` on the skeleton.
pub fn oracle_atoms(dag: &SynthDag, max_cond: usize) -> Vec<ObservedAtom> {
    let mut out = Vec::new();
    for a in 0..dag.n {
        for b in (a + 1)..dag.n {
            for cond in enumerate_cond_sets(dag.n, &[a, b], max_cond) {
                let separated = d_separation(dag, a, b, &cond);
                let predicate = match (cond.is_empty(), separated) {
                    (true, true) => Predicate::Indep,
                    (true, false) => Predicate::Dep,
                    (false, true) => Predicate::CondIndep,
                    (false, false) => Predicate::CondDep,
                };
                out.push(ObservedAtom {
                    predicate,
                    a,
                    b,
                    cond,
                    truth: 1.0,
                });
            }
        }
    }
    for (a, b) in dag.skeleton() {
        out.push(ObservedAtom {
            predicate: Predicate::TextAdj,
            a,
            b,
            cond: CondSet::empty(),
            truth: 1.0,
        });
    }
    out
}

/// Knowledge-base evidence that keeps each true adjacency with probability
/// `target_recall` and adds enough false pairs to hit `target_precision`.
/// Scores are uniform in `(0.5, 1.0]` of the native scale.
pub fn corrupt_kb(dag: &SynthDag, target_precision: f64, target_recall: f64, seed: u64) -> Result<KbEvidence> {
    for (name, v) in [("precision", target_precision), ("recall", target_recall)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidParameter(format!("target {name} {v} outside (0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skeleton = dag.skeleton();
    let kept: Vec<(usize, usize)> = skeleton
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < target_recall)
        .collect();
    let false_count = if kept.is_empty() {
        if target_precision < 1.0 {
            return Err(Error::InfeasibleCorruption(
                "no true adjacency was kept, so the target precision cannot be met".into(),
            ));
        }
        0
    } else {
        (kept.len() as f64 * (1.0 - target_precision) / target_precision).round() as usize
    };
    let non_edges: Vec<(usize, usize)> = (0..dag.n)
        .flat_map(|a| ((a + 1)..dag.n).map(move |b| (a, b)))
        .filter(|p| !skeleton.contains(p))
        .collect();
    if false_count > non_edges.len() {
        return Err(Error::InfeasibleCorruption(format!(
            "need {false_count} false pairs but only {} non-adjacent pairs exist",
            non_edges.len()
        )));
    }
    let false_pairs: Vec<(usize, usize)> = non_edges.choose_multiple(&mut rng, false_count).copied().collect();
    let mut kb = KbEvidence {
        scale_max: ScaleMax::Fixed(DEFAULT_SCALE_MAX),
        ..Default::default()
    };
    let mut pairs: Vec<(usize, usize)> = kept.into_iter().chain(false_pairs).collect();
    pairs.sort_unstable();
    for (a, b) in pairs {
        // (0.5, 1.0], so every kept pair clears a 0.5 decision threshold
        let u = 1.0 - 0.5 * rng.random::<f64>();
        kb.insert(a, b, (u * DEFAULT_SCALE_MAX * 1000.0).round() / 1000.0);
    }
    Ok(kb)
}
