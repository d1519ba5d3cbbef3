use thiserror::Error;

use crate::graph::LaggedEdge;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("lag-0 edge {0} would close a contemporaneous cycle")]
    CycleViolation(LaggedEdge),

    #[error("invalid changepoints: {0}")]
    InvalidChangepoints(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("empty subsample for variable {variable} (context {context}, regime {regime})")]
    EmptySubsample {
        variable: usize,
        context: usize,
        regime: usize,
    },

    #[error("kernel matrix is not positive definite after maximum jitter")]
    SingularKernel,

    #[error("non-finite code length component `{0}`")]
    NonFiniteScore(&'static str),

    #[error("too few samples for the mechanism test: {got} < {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("training window too short: {0}")]
    WindowTooShort(String),

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("graph kind or dimension mismatch: {0}")]
    KindMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
