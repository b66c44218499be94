//! Contrastive, sequential weight-of-evidence (WoE) explanations for
//! multi-class classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`density`] fits class-conditional Gaussian models and evaluates exact
//!   conditional log-densities. It is the likelihood backend for everything
//!   else.
//! * [`woe`] holds the WoE formulas: contrastive, conditional, chained over
//!   attributes, the Bayes log-odds decomposition and Information Value.
//! * [`contrast`] picks the entailed/contrast split of the remaining classes
//!   at each explanation round.
//! * [`explain`] runs the full sequential explanation and builds the report.
//! * [`data_io`] reads CSV data, partitions, and black-box oracle labels.
//! * [`validate`] re-checks the exact identities on sampled rows.
//!
//! All log quantities are natural logs (nats).

pub mod contrast;
pub mod data_io;
pub mod density;
mod error;
pub mod evidence;
pub mod explain;
pub mod hypothesis;
pub mod math;
mod par;
pub mod validate;
pub mod woe;

pub use contrast::{best_contrast, regularizer, score_subset, ContrastParams};
pub use density::{
    class_conditional_log_density, posterior, set_conditional_log_likelihood, CovarianceMode,
    DensityBackend, GaussianClassModel,
};
pub use error::{Result, WoeError};
pub use evidence::{Attribute, AttributePartition, Evidence};
pub use explain::{
    explain, filter_display, score_attributes, AttributeScore, AttributeSource, ExplainerParams,
    ExplanationReport, ExplanationStep, OrderingPolicy, RemainingUpdate, ScoringMode,
};
pub use hypothesis::HypothesisSet;
pub use woe::{
    bayes_decomposition, information_value, woe, woe_chain, woe_conditional, BayesDecomposition,
    Quadrature, WoeScore,
};
