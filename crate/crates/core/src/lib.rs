//! Causal discovery that fuses knowledge-base adjacency evidence with
//! statistical independence tests.
//!
//! Weighted logical rules over `Causes` and `Anc` atoms are grounded into a
//! hinge-loss Markov random field and solved for the most probable causal
//! graph with consensus ADMM.
//!
//! The modules follow the data flow:
//!
//! - [`model`]: vertices, predicates, atoms, conditioning sets
//! - [`stats`]: partial correlations, Fisher's z tests, binning into atoms
//! - [`kb`]: affinity and PPI evidence
//! - [`rules`]: rule templates and Lukasiewicz grounding
//! - [`inference`]: MAP inference and rounding
//! - [`pipeline`]: end-to-end runs, evaluation, cross-validation
//! - [`synth`]: synthetic DAGs, data and a d-separation oracle

pub mod error;
pub mod inference;
pub mod io;
pub mod kb;
pub mod model;
pub mod pipeline;
pub mod rules;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
