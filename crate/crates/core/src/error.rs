use thiserror::Error;

pub type Result<T, E = WoeError> = std::result::Result<T, E>;

/// Errors raised by the density, WoE, contrast and explanation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WoeError {
    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),
    #[error("unknown label {label}: model has {num_classes} classes")]
    UnknownLabel { label: usize, num_classes: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("feature {index} is required but not observed")]
    MissingEvidence { index: usize },
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
    #[error("degenerate prior: hypothesis set {0} has zero prior mass")]
    DegeneratePrior(String),
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    #[error("numerical conditioning failure: {0}")]
    NumericalConditioning(String),
    #[error("insufficient data for class {class}: {count} samples, need at least 2")]
    InsufficientData { class: usize, count: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("contrast set is empty: entailed set covers every remaining class")]
    EmptyContrast,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("nothing to explain: model has a single class")]
    NothingToExplain,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}
