//! `causal-psl` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors.
//! Usage errors are reported before any file is read.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};

fn validate(cli: &Cli) -> Result<(), (ErrorKind, String)> {
    let needs_adj = |v: &args::VariantArgs| {
        if !v.variant.uses_text() && v.alpha_adj.is_none() {
            Err((
                ErrorKind::MissingRequiredArgument,
                format!("{} requires --alpha-adj", v.variant),
            ))
        } else {
            Ok(())
        }
    };
    let iters = |s: &args::SolverArgs| match s.max_iters {
        Some(0) => Err((ErrorKind::ValueValidation, "--max-iters must be at least 1".to_string())),
        _ => Ok(()),
    };
    match &cli.command {
        Command::Ground(a) => needs_adj(&a.variant),
        Command::Run(a) => {
            needs_adj(&a.variant)?;
            iters(&a.solver)
        }
        Command::Cv(a) => {
            if a.manifests.len() < 2 {
                return Err((
                    ErrorKind::TooFewValues,
                    format!("cv needs at least 2 manifests, got {}", a.manifests.len()),
                ));
            }
            iters(&a.solver)
        }
        Command::Synth(a) => {
            if a.n < 2 {
                Err((ErrorKind::ValueValidation, "--n must be at least 2".into()))
            } else if a.m <= 10 {
                Err((ErrorKind::ValueValidation, "--m must exceed 10".into()))
            } else if a.count == 0 {
                Err((ErrorKind::ValueValidation, "--count must be at least 1".into()))
            } else {
                Ok(())
            }
        }
        Command::Tests(_) | Command::AdjacencyEval(_) => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err((kind, msg)) = validate(&cli) {
        Cli::command().error(kind, msg).exit();
    }
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
