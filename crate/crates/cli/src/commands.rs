use std::io::Write;

use anyhow::Result;
use causal_psl::inference::{write_trace_tsv, ScoredEdge, SolverConfig};
use causal_psl::io::{write_atomic, write_with};
use causal_psl::model::{Predicate, TargetIndex, VertexSet};
use causal_psl::pipeline::{
    adjacency_eval, cross_validate, run_variant, synthetic_instance, CvConfig, CvReport, EvalReport,
    NetworkInstance, PreparedInstance, RunParams, SynthSpec,
};
use causal_psl::rules::{builtin_rules, count_groundings, write_ground_tsv, Variant};
use causal_psl::stats::{bin_tests, run_all_tests, write_atoms_tsv, write_tests_tsv, Binning};
use log::info;
use serde::Serialize;

use crate::args::{self, Cli, Command};

pub fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Tests(a) => tests(a),
        Command::Ground(a) => ground(a),
        Command::Run(a) => run(a, seed),
        Command::Cv(a) => cv(a, seed),
        Command::Synth(a) => synth(a, seed),
        Command::AdjacencyEval(a) => adjacency(a, seed),
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn write_edges<W: Write>(edges: &[ScoredEdge], vertices: &VertexSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "from\tto\ttruth")?;
    for e in edges {
        writeln!(out, "{}\t{}\t{}", vertices.name(e.from), vertices.name(e.to), e.value)?;
    }
    Ok(())
}

fn tests(a: args::TestsArgs) -> Result<()> {
    let inst = NetworkInstance::load(&a.input.manifest, a.input.scale_max)?;
    let results = run_all_tests(&inst.dataset, a.tests.max_cond)?;
    let atoms = bin_tests(
        &results,
        Binning {
            alpha: a.alpha,
            skew_rescale: !a.tests.no_skew_rescale,
        },
    )?;
    let mut tests_buf = Vec::new();
    write_tests_tsv(&results, &inst.vertices, &mut tests_buf)?;
    let mut atoms_buf = Vec::new();
    write_atoms_tsv(&atoms, &inst.vertices, &mut atoms_buf)?;
    write_atomic(&a.out.join("tests.tsv"), &tests_buf)?;
    write_atomic(&a.out.join("atoms.tsv"), &atoms_buf)?;

    let count = |p: Predicate| atoms.iter().filter(|x| x.predicate == p).count();
    println!(
        "{} tests: {} Dep, {} Indep, {} CondDep, {} CondIndep",
        results.len(),
        count(Predicate::Dep),
        count(Predicate::Indep),
        count(Predicate::CondDep),
        count(Predicate::CondIndep)
    );
    Ok(())
}

fn ground(a: args::GroundArgs) -> Result<()> {
    let inst = NetworkInstance::load(&a.input.manifest, a.input.scale_max)?;
    let options = args::pipeline_options(&a.tests, None);
    let prepared = PreparedInstance::new(&inst, options)?;
    let v = &a.variant;
    let potentials = prepared.ground_program(v.variant, v.alpha, v.alpha_adj)?;
    write_with(&a.out, |buf| write_ground_tsv(&potentials, &inst.vertices, buf))?;

    let rules = builtin_rules(v.variant, !inst.ppi.is_empty());
    println!("rule\tcandidates\tkept");
    for (id, candidates) in count_groundings(&rules, inst.vertices.len(), a.tests.max_cond) {
        let kept = potentials.iter().filter(|p| p.rule == id).count();
        println!("{id}\t{candidates}\t{kept}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SolverDiagnostics {
    config: SolverConfig,
    iterations: usize,
    converged: bool,
    objective: f64,
    initial_objective: f64,
    primal_residual: f64,
    dual_residual: f64,
    /// Target atoms no potential touches, left at the initial value.
    free_variables: Vec<String>,
}

#[derive(Serialize)]
struct RunOutput<'a> {
    instance: &'a str,
    variant: Variant,
    params: RunParams,
    seed: u64,
    num_potentials: usize,
    report: EvalReport,
    solver: SolverDiagnostics,
}

fn run(a: args::RunArgs, seed: u64) -> Result<()> {
    let inst = NetworkInstance::load(&a.input.manifest, a.input.scale_max)?;
    let mut options = args::pipeline_options(&a.tests, Some(&a.solver));
    options.solver.record_trace = a.trace;
    let v = &a.variant;
    let params = RunParams {
        alpha: v.alpha,
        alpha_adj: if v.variant.uses_text() { None } else { v.alpha_adj },
        threshold: a.threshold,
    };
    let result = run_variant(&inst, v.variant, params, options)?;
    let ground_dump = if a.dump_ground {
        let prepared = PreparedInstance::new(&inst, options)?;
        let potentials = prepared.ground_program(v.variant, params.alpha, params.alpha_adj)?;
        let mut buf = Vec::new();
        write_ground_tsv(&potentials, &inst.vertices, &mut buf)?;
        Some(buf)
    } else {
        None
    };

    let names = &inst.vertices;
    let index = TargetIndex::new(names.len())?;
    let free_variables = result
        .solution
        .free_variables
        .iter()
        .map(|&i| {
            let (p, from, to) = index.atom_at(i);
            format!("{}({},{})", p.name(), names.name(from), names.name(to))
        })
        .collect();
    let sol = &result.solution;
    let output = RunOutput {
        instance: &inst.name,
        variant: v.variant,
        params,
        seed,
        num_potentials: result.num_potentials,
        report: result.report,
        solver: SolverDiagnostics {
            config: options.solver,
            iterations: sol.iterations,
            converged: sol.converged,
            objective: sol.objective,
            initial_objective: sol.initial_objective,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            free_variables,
        },
    };
    let mut edges = Vec::new();
    write_edges(&result.predicted.causes, names, &mut edges)?;
    let report = json(&output);
    let trace = if a.trace {
        let mut buf = Vec::new();
        write_trace_tsv(&sol.trace, &mut buf)?;
        Some(buf)
    } else {
        None
    };

    write_atomic(&a.out.join("edges.tsv"), &edges)?;
    write_atomic(&a.out.join("report.json"), &report)?;
    if let Some(buf) = trace {
        write_atomic(&a.out.join("iterations.tsv"), &buf)?;
    }
    if let Some(buf) = ground_dump {
        write_atomic(&a.out.join("ground.tsv"), &buf)?;
    }
    let r = &result.report;
    println!(
        "{} {}: precision {:.4} recall {:.4} F1 {:.4} ({} iterations, converged={})",
        inst.name, v.variant, r.precision, r.recall, r.f1, sol.iterations, sol.converged
    );
    Ok(())
}

#[derive(Serialize)]
struct CvOutput<'a> {
    seed: u64,
    #[serde(flatten)]
    report: &'a CvReport,
}

fn cv(a: args::CvArgs, seed: u64) -> Result<()> {
    let instances = a
        .manifests
        .iter()
        .map(|p| NetworkInstance::load(p, a.scale_max))
        .collect::<causal_psl::Result<Vec<_>>>()?;
    let mut config = CvConfig::new(a.variant);
    config.options = args::pipeline_options(&a.tests, Some(&a.solver));
    if let Some(g) = a.alphas {
        config.alphas = g;
    }
    if let Some(g) = a.alpha_adjs {
        config.alpha_adjs = g;
    }
    if let Some(g) = a.thresholds {
        config.thresholds = g;
    }
    let report = cross_validate(&instances, &config)?;

    let mut edges = Vec::new();
    writeln!(edges, "held_out\tfrom\tto\ttruth")?;
    for (fold, inst) in report.folds.iter().zip(&instances) {
        let params = RunParams {
            alpha: fold.alpha,
            alpha_adj: fold.alpha_adj,
            threshold: fold.threshold,
        };
        let result = run_variant(inst, a.variant, params, config.options)?;
        for e in &result.predicted.causes {
            writeln!(
                edges,
                "{}\t{}\t{}\t{}",
                inst.name,
                inst.vertices.name(e.from),
                inst.vertices.name(e.to),
                e.value
            )?;
        }
    }
    let output = json(&CvOutput { seed, report: &report });
    write_atomic(&a.out.join("report.json"), &output)?;
    write_atomic(&a.out.join("edges.tsv"), &edges)?;
    for f in &report.folds {
        info!("{}: alpha={} threshold={} F1={:.4}", f.held_out, f.alpha, f.threshold, f.report.f1);
    }
    println!("{} F1 {}", a.variant, report.summary);
    Ok(())
}

fn synth(a: args::SynthArgs, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        n: a.n,
        edge_prob: a.edge_prob,
        m: a.m,
        kb_precision: a.kb_precision,
        kb_recall: a.kb_recall,
    };
    let instances = (0..a.count)
        .map(|k| synthetic_instance(&spec, seed, k).map(|(inst, _)| inst))
        .collect::<causal_psl::Result<Vec<_>>>()?;
    for inst in &instances {
        let manifest = inst.write_to(&a.out.join(&inst.name))?;
        println!("{}", manifest.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct AdjacencyOutput<'a> {
    instance: &'a str,
    seed: u64,
    alpha_adj: f64,
    adjacency_threshold: f64,
    text: EvalReport,
    standard: EvalReport,
}

fn adjacency(a: args::AdjacencyArgs, seed: u64) -> Result<()> {
    let inst = NetworkInstance::load(&a.input.manifest, a.input.scale_max)?;
    let mut options = args::pipeline_options(&a.tests, None);
    options.adjacency_threshold = a.adjacency_threshold;
    let r = adjacency_eval(&inst, a.alpha_adj, options)?;
    let output = json(&AdjacencyOutput {
        instance: &inst.name,
        seed,
        alpha_adj: a.alpha_adj,
        adjacency_threshold: a.adjacency_threshold,
        text: r.text,
        standard: r.standard,
    });
    match &a.out {
        Some(path) => write_atomic(path, &output)?,
        None => std::io::stdout().write_all(&output)?,
    }
    Ok(())
}

