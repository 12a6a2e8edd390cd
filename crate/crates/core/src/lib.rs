//! Heterogeneous treatment effect estimation for observational data.
//!
//! Three tree-ensemble estimators produce per-unit effects on the additive
//! (risk-difference) scale:
//!
//! * [`grf`]: generalized random forest with honest gradient trees,
//! * [`bart`]: Bayesian additive regression trees fit by backfitting MCMC,
//! * [`bcf`]: Bayesian causal forest with separate prognostic and effect ensembles.
//!
//! [`analysis`] turns those estimates into effect-measure-modification
//! summaries and runs the classical stratified comparison, and [`pipeline`]
//! strings everything together from a config file.

pub mod analysis;
pub mod bart;
pub mod bcf;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod grf;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use dataset::{ObservationalDataset, OutcomeKind};
pub use error::{Error, Result};
