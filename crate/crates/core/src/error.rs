use thiserror::Error;

use crate::pipeline::PipelineReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid reward specification: {0}")]
    InvalidReward(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("enumeration refused: {candidates} candidate policies exceed the cap of {cap}; use branch-and-bound instead")]
    EnumerationCap { candidates: f64, cap: u64 },

    #[error("cannot evaluate a policy on an empty test set")]
    EmptyTestSet,

    #[error("least-squares fit failed: {0}")]
    Fitting(String),

    #[error("time budget exhausted before any solve completed")]
    BudgetExhausted(Box<PipelineReport>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag used as the machine-parsable prefix by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidParameter(_) => "parameter",
            Error::InvalidReward(_) => "reward",
            Error::Configuration(_) => "config",
            Error::Factorization(_) => "factorization",
            Error::EnumerationCap { .. } => "refused",
            Error::EmptyTestSet => "empty-test-set",
            Error::Fitting(_) => "fitting",
            Error::BudgetExhausted(_) => "budget",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
