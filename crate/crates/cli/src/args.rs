use std::path::PathBuf;

use causal_psl::inference::SolverConfig;
use causal_psl::kb::ScaleMax;
use causal_psl::model::DEFAULT_MAX_COND;
use causal_psl::pipeline::{PipelineOptions, DEFAULT_ADJACENCY_THRESHOLD};
use causal_psl::rules::Variant;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "causal-psl", version, about = "Causal discovery from independence tests and knowledge-base evidence")]
pub struct Cli {
    /// Seed for all random draws; recorded in every report.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run all independence tests and write the test and binned-atom dumps.
    Tests(TestsArgs),
    /// Ground a variant's rules and dump the potentials.
    Ground(GroundArgs),
    /// Run one variant end to end and score it against the gold edges.
    Run(RunArgs),
    /// Leave-one-instance-out parameter selection over several instances.
    Cv(CvArgs),
    /// Generate synthetic instances.
    Synth(SynthArgs),
    /// Score text-derived and test-derived adjacencies against the gold skeleton.
    AdjacencyEval(AdjacencyArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Instance manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Affinity normalization divisor: a positive number or `file-max`.
    #[arg(long, default_value = "1000", value_parser = parse_scale)]
    pub scale_max: ScaleMax,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Largest conditioning-set size.
    #[arg(long, default_value_t = DEFAULT_MAX_COND)]
    pub max_cond: usize,
    /// Use `p` rather than its cube root as the truth of independence atoms.
    #[arg(long)]
    pub no_skew_rescale: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// ADMM step parameter.
    #[arg(long, value_parser = positive)]
    pub rho: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Absolute residual tolerance.
    #[arg(long, value_parser = positive)]
    pub eps_abs: Option<f64>,
    /// Relative residual tolerance.
    #[arg(long, value_parser = positive)]
    pub eps_rel: Option<f64>,
    /// Starting value of every target atom.
    #[arg(long, value_parser = unit_closed)]
    pub initial_value: Option<f64>,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.eps_abs {
            c.eps_abs = v;
        }
        if let Some(v) = self.eps_rel {
            c.eps_rel = v;
        }
        if let Some(v) = self.initial_value {
            c.initial_value = v;
        }
        c
    }
}

pub fn pipeline_options(tests: &TestArgs, solver: Option<&SolverArgs>) -> PipelineOptions {
    PipelineOptions {
        max_cond: tests.max_cond,
        skew_rescale: !tests.no_skew_rescale,
        solver: solver.map(SolverArgs::config).unwrap_or_default(),
        ..PipelineOptions::default()
    }
}

#[derive(Debug, Args)]
pub struct TestsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tests: TestArgs,
    /// Significance level for binning test outcomes.
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    pub alpha: f64,
    /// Output directory for `tests.tsv` and `atoms.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VariantArgs {
    /// CausPSL, ObsPSL, CausPSL-PC or ObsPSL-PC.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    /// Significance level for test atoms.
    #[arg(long, value_parser = unit_open)]
    pub alpha: f64,
    /// Significance level for StandardAdj; required by ObsPSL variants.
    #[arg(long, value_parser = unit_open)]
    pub alpha_adj: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tests: TestArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Output TSV of ground potentials.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tests: TestArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Rounding threshold for predicted edges.
    #[arg(long, default_value_t = 0.5, value_parser = unit_closed)]
    pub threshold: f64,
    /// Output directory for `edges.tsv` and `report.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-iteration log to `iterations.tsv`.
    #[arg(long)]
    pub trace: bool,
    /// Also write the ground program to `ground.tsv`.
    #[arg(long)]
    pub dump_ground: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// Instance manifests; at least two.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Affinity normalization divisor: a positive number or `file-max`.
    #[arg(long, default_value = "1000", value_parser = parse_scale)]
    pub scale_max: ScaleMax,
    /// CausPSL, ObsPSL, CausPSL-PC or ObsPSL-PC.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    #[command(flatten)]
    pub tests: TestArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated alpha grid.
    #[arg(long, value_delimiter = ',', value_parser = unit_open)]
    pub alphas: Option<Vec<f64>>,
    /// Comma-separated adjacency alpha grid (ObsPSL variants).
    #[arg(long, value_delimiter = ',', value_parser = unit_open)]
    pub alpha_adjs: Option<Vec<f64>>,
    /// Comma-separated rounding threshold grid.
    #[arg(long, value_delimiter = ',', value_parser = unit_open)]
    pub thresholds: Option<Vec<f64>>,
    /// Output directory for `report.json` and `edges.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Vertices per instance.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Probability of each forward edge.
    #[arg(long, default_value_t = 0.1, value_parser = unit_closed)]
    pub edge_prob: f64,
    /// Samples per instance.
    #[arg(long, default_value_t = 210)]
    pub m: usize,
    /// Target precision of the corrupted knowledge base.
    #[arg(long, default_value_t = 0.32, value_parser = unit_left_open)]
    pub kb_precision: f64,
    /// Target recall of the corrupted knowledge base.
    #[arg(long, default_value_t = 0.11, value_parser = unit_closed)]
    pub kb_recall: f64,
    /// Number of instances.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Output directory; one subdirectory per instance.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdjacencyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tests: TestArgs,
    /// Significance level for StandardAdj.
    #[arg(long, value_parser = unit_open)]
    pub alpha_adj: f64,
    /// TextAdj values above this count as adjacencies.
    #[arg(long, default_value_t = DEFAULT_ADJACENCY_THRESHOLD, value_parser = unit_closed)]
    pub adjacency_threshold: f64,
    /// Output JSON report; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn unit_left_open(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn unit_closed(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not positive"))
    }
}

fn parse_scale(s: &str) -> Result<ScaleMax, String> {
    if s.eq_ignore_ascii_case("file-max") {
        return Ok(ScaleMax::FileMax);
    }
    positive(s).map(ScaleMax::Fixed)
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: causal_psl::Error| e.to_string())
}
