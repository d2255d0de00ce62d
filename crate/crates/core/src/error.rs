use thiserror::Error;

use crate::lp::LpStatus;
use crate::table::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} coordinates, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("pair is not ordered by the componentwise relation (first must weakly dominate second)")]
    PairNotInR1,

    #[error("invalid table: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTable(Vec<Violation>),

    #[error("invalid scale: {0}")]
    InvalidScale(String),

    #[error("unknown classifier '{0}'")]
    UnknownClassifier(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "constraint cap exceeded: {what} = {count} > limit {limit} (raise the cap; constraints are never subsampled)"
    )]
    ConstraintCap {
        what: &'static str,
        count: usize,
        limit: usize,
    },

    #[error("linear program failed with status {status:?}: {detail}")]
    Lp { status: LpStatus, detail: String },

    #[error("preference system is inconsistent (no representation with a positive margin)")]
    Inconsistent,

    #[error("resample {index_set:?} failed: {source}")]
    Resample {
        index_set: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("exhaustive enumeration needs {count} splits, above the limit {limit}")]
    ExhaustiveTooLarge { count: u128, limit: u128 },

    #[error("dominance relation contains a strict cycle through '{0}'")]
    CyclicRelation(String),

    #[error("{groups} groups exceed the shipped studentized-range table (max {max})")]
    QuantileTableLimit { groups: usize, max: usize },

    #[error("no shipped studentized-range quantiles for alpha = {0} (available: 0.01, 0.05, 0.10)")]
    QuantileAlpha(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Lp { .. } | Error::Inconsistent | Error::CyclicRelation(_) => true,
            Error::Resample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn lp(status: LpStatus, detail: impl Into<String>) -> Self {
        Error::Lp {
            status,
            detail: detail.into(),
        }
    }
}
