//! Root cause analysis for multivariate system metrics.
//!
//! Given a table of time series (one per metric), a degraded performance
//! metric, and optional operator knowledge about the system, the pipeline
//! answers "which metrics plausibly caused the degradation, and through
//! which causal chain?". It runs in four stages:
//!
//! 1. [`window`] finds the anomalous span of the performance metric and
//!    slices the series around it.
//! 2. [`discovery`] learns a lagged causal skeleton from the sliced data
//!    with conditional-independence tests.
//! 3. [`enhancement`] folds in domain knowledge (metric levels, known
//!    edges) and orients what is left undirected, falling back to an
//!    entropy-based direction estimate for level ties.
//! 4. [`refinement`] scores every candidate against the performance metric
//!    with a shift/smooth-tolerant correlation, and [`subtraction`] carves
//!    out the sub-graph connecting the surviving candidates to the target.
//!
//! [`simulator`] and [`evaluation`] provide a synthetic benchmark: ground
//! truth graphs, anomaly injection, and recall/precision scoring of the
//! whole pipeline under different amounts of domain knowledge.
//!
//! The end-to-end entry point used by the CLI is [`pipeline::diagnose`].
//! Everything is deterministic given input bytes, configuration, and seeds.

pub mod dataset;
pub mod discovery;
pub mod enhancement;
pub mod entropy;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod graph;
pub mod knowledge;
pub mod pipeline;
pub mod plot;
pub mod refinement;
pub mod simulator;
pub mod subtraction;
pub mod window;

mod stats;

pub use dataset::{DiagnosticInput, TimeSeriesDataset};
pub use error::Error;
pub use graph::CausalGraph;
pub use knowledge::DomainKnowledge;
pub use subtraction::RootCauseReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
