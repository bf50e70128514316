//! MAP inference for hinge-loss MRFs by consensus ADMM.
//!
//! Each potential keeps a local copy of the variables it touches. An
//! iteration minimizes every potential's hinge plus a proximal term in
//! closed form, averages copies into a box-projected consensus vector, and
//! takes a dual step on the disagreement.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Predicate, TargetIndex};
use crate::rules::GroundPotential;

#[derive(Debug, Clone, PartialEq)]
pub struct HlMrfProblem {
    pub num_targets: usize,
    pub potentials: Vec<GroundPotential>,
}

impl HlMrfProblem {
    pub fn new(num_targets: usize, potentials: Vec<GroundPotential>) -> Result<Self> {
        for (r, p) in potentials.iter().enumerate() {
            if !(p.weight > 0.0) || !p.weight.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "potential {r} has non-positive weight {}",
                    p.weight
                )));
            }
            if !p.constant.is_finite() || p.terms.iter().any(|(_, c)| !c.is_finite()) {
                return Err(Error::NonFinite(r));
            }
            if let Some(&(i, _)) = p.terms.iter().find(|(i, _)| *i >= num_targets) {
                return Err(Error::DimensionMismatch {
                    expected: num_targets,
                    got: i + 1,
                });
            }
        }
        Ok(HlMrfProblem {
            num_targets,
            potentials,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub initial_value: f64,
    /// Record objective and residuals every iteration.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            max_iters: 25_000,
            eps_abs: 1e-5,
            eps_rel: 1e-3,
            initial_value: 0.5,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(0.0..=1.0).contains(&self.initial_value) {
            return bad("initial value must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSolution {
    /// Best consensus iterate.
    pub y: Vec<f64>,
    pub objective: f64,
    /// Objective at the initial point.
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Variables that appear in no potential; they keep the initial value.
    pub free_variables: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<IterationRecord>,
}

/// `sum_r w_r * max(0, l_r(y))`.
pub fn objective(problem: &HlMrfProblem, y: &[f64]) -> Result<f64> {
    if y.len() != problem.num_targets {
        return Err(Error::DimensionMismatch {
            expected: problem.num_targets,
            got: y.len(),
        });
    }
    Ok(objective_unchecked(problem, y))
}

fn objective_unchecked(problem: &HlMrfProblem, y: &[f64]) -> f64 {
    problem.potentials.iter().map(|p| p.weight * p.distance(y)).sum()
}

/// Minimizes `w * max(0, c + a.x) + rho/2 * |x - v|^2` in place of `v`.
fn hinge_prox(x: &mut [f64], a: &[f64], c: f64, w: f64, rho: f64) {
    let lin = |x: &[f64]| c + a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>();
    let at_v = lin(x);
    if at_v <= 0.0 {
        return;
    }
    // hinge active: gradient step of length w / rho along -a
    let step = w / rho;
    let norm2: f64 = a.iter().map(|ai| ai * ai).sum();
    if at_v - step * norm2 >= 0.0 {
        for (xi, ai) in x.iter_mut().zip(a) {
            *xi -= step * ai;
        }
        return;
    }
    // otherwise the minimizer sits on the breakpoint hyperplane
    let t = at_v / norm2;
    for (xi, ai) in x.iter_mut().zip(a) {
        *xi -= t * ai;
    }
}

struct Layout {
    /// Copy range of each potential.
    offsets: Vec<usize>,
    /// Variable of each copy.
    var: Vec<usize>,
    /// Coefficient of each copy.
    coeff: Vec<f64>,
    /// For each variable, the copies that reference it (CSR).
    var_start: Vec<usize>,
    var_copies: Vec<usize>,
}

impl Layout {
    fn new(problem: &HlMrfProblem) -> Self {
        let mut offsets = Vec::with_capacity(problem.potentials.len() + 1);
        let mut var = Vec::new();
        let mut coeff = Vec::new();
        offsets.push(0);
        for p in &problem.potentials {
            for &(i, c) in &p.terms {
                var.push(i);
                coeff.push(c);
            }
            offsets.push(var.len());
        }
        let n = problem.num_targets;
        let mut counts = vec![0usize; n + 1];
        for &v in &var {
            counts[v + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let var_start = counts.clone();
        let mut fill = counts;
        let mut var_copies = vec![0; var.len()];
        for (k, &v) in var.iter().enumerate() {
            var_copies[fill[v]] = k;
            fill[v] += 1;
        }
        Layout {
            offsets,
            var,
            coeff,
            var_start,
            var_copies,
        }
    }

    fn copies_of(&self, v: usize) -> &[usize] {
        &self.var_copies[self.var_start[v]..self.var_start[v + 1]]
    }
}

/// Solves `argmin_{y in [0,1]^N} sum_r w_r max(0, l_r(y))` by consensus
/// ADMM. The returned point is the consensus iterate with the lowest
/// objective, the initial point included, so the objective never exceeds
/// its initial value. Residuals describe the last iteration.
pub fn solve_map(problem: &HlMrfProblem, config: &SolverConfig) -> Result<MapSolution> {
    config.validate()?;
    let n = problem.num_targets;
    let layout = Layout::new(problem);
    let copies = layout.var.len();
    let rho = config.rho;

    let mut z = vec![config.initial_value; n];
    let mut x: Vec<f64> = layout.var.iter().map(|&v| z[v]).collect();
    let mut u = vec![0.0; copies];
    let free_variables: Vec<usize> = (0..n).filter(|&v| layout.copies_of(v).is_empty()).collect();
    let initial_objective = objective_unchecked(problem, &z);
    let mut best = (initial_objective, z.clone());

    let sqrt_p = (copies as f64).sqrt();
    let mut trace = Vec::new();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = copies == 0;

    while !converged && iterations < config.max_iters {
        iterations += 1;

        for (r, p) in problem.potentials.iter().enumerate() {
            let range = layout.offsets[r]..layout.offsets[r + 1];
            if range.is_empty() {
                continue;
            }
            for k in range.clone() {
                x[k] = z[layout.var[k]] - u[k];
            }
            hinge_prox(&mut x[range.clone()], &layout.coeff[range.clone()], p.constant, p.weight, rho);
            if x[range].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(r));
            }
        }

        let mut dual_sq = 0.0;
        for v in 0..n {
            let cs = layout.copies_of(v);
            if cs.is_empty() {
                continue;
            }
            let sum: f64 = cs.iter().map(|&k| x[k] + u[k]).sum();
            let new = (sum / cs.len() as f64).clamp(0.0, 1.0);
            let diff = new - z[v];
            dual_sq += cs.len() as f64 * diff * diff;
            z[v] = new;
        }

        let mut primal_sq = 0.0;
        let mut x_sq = 0.0;
        let mut z_sq = 0.0;
        let mut u_sq = 0.0;
        for k in 0..copies {
            let zk = z[layout.var[k]];
            let r = x[k] - zk;
            u[k] += r;
            primal_sq += r * r;
            x_sq += x[k] * x[k];
            z_sq += zk * zk;
            u_sq += u[k] * u[k];
        }
        primal = primal_sq.sqrt();
        dual = rho * dual_sq.sqrt();
        let eps_primal = sqrt_p * config.eps_abs + config.eps_rel * x_sq.sqrt().max(z_sq.sqrt());
        let eps_dual = sqrt_p * config.eps_abs + config.eps_rel * rho * u_sq.sqrt();
        converged = primal <= eps_primal && dual <= eps_dual;

        let current = objective_unchecked(problem, &z);
        if current < best.0 {
            best.0 = current;
            best.1.copy_from_slice(&z);
        }
        if config.record_trace {
            trace.push(IterationRecord {
                iteration: iterations,
                objective: current,
                primal_residual: primal,
                dual_residual: dual,
            });
        }
    }

    let (objective, z) = best;
    if !objective.is_finite() {
        return Err(Error::NonFinite(usize::MAX));
    }
    if copies == 0 {
        primal = 0.0;
        dual = 0.0;
    }
    Ok(MapSolution {
        y: z,
        objective,
        initial_objective,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual,
        free_variables,
        trace,
    })
}

/// A directed edge with its inferred truth value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

/// Edges whose inferred value meets a threshold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundedGraph {
    pub causes: Vec<ScoredEdge>,
    pub ancestors: Vec<ScoredEdge>,
}

/// Predicts `Causes(a, b)` iff its value is at least `threshold`. `Anc`
/// atoms are rounded the same way but kept separate.
pub fn round_solution(y: &[f64], index: &TargetIndex, threshold: f64) -> Result<RoundedGraph> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    if y.len() != index.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            got: y.len(),
        });
    }
    let mut out = RoundedGraph::default();
    for (i, &value) in y.iter().enumerate() {
        if value < threshold {
            continue;
        }
        let (predicate, from, to) = index.atom_at(i);
        let edge = ScoredEdge { from, to, value };
        match predicate {
            Predicate::Causes => out.causes.push(edge),
            _ => out.ancestors.push(edge),
        }
    }
    Ok(out)
}

/// Writes `iteration, objective, primal, dual` rows.
pub fn write_trace_tsv<W: Write>(trace: &[IterationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration\tobjective\tprimal_residual\tdual_residual")?;
    for r in trace {
        writeln!(
            out,
            "{}\t{:e}\t{:e}\t{:e}",
            r.iteration, r.objective, r.primal_residual, r.dual_residual
        )?;
    }
    Ok(())
}
