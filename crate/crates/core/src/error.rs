use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of errors, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("set size {s} out of range 1..={k}")]
    SizeOutOfRange { s: usize, k: usize },
    #[error("utility is undefined at set size {s}")]
    UndefinedAtSize { s: usize },
    #[error("invalid utility parameters: {0}")]
    InvalidParams(String),
    #[error("g({s}) is not positive, reciprocal undefined")]
    NonPositiveG { s: usize },
    #[error("utility is not normalized: g(1) = {g1}")]
    NotNormalized { g1: f64 },
    #[error("utility not supported here: {0}")]
    UnsupportedUtility(String),
    #[error("prediction set is empty")]
    EmptyPrediction,

    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),
    #[error("class provider returned no class")]
    ProviderExhaustedEarly,
    #[error("class provider emitted increasing mass ({prev} then {next})")]
    NonMonotoneProvider { prev: f64, next: f64 },
    #[error("class universe too large for exhaustive search: {k} > {max}")]
    UniverseTooLarge { k: usize, max: usize },
    #[error("distributions are defined over different class universes")]
    UniverseMismatch,
    #[error("threshold {0} outside [0, 1]")]
    ThetaOutOfRange(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,

    #[error("hierarchy contains a cycle")]
    CycleDetected,
    #[error("hierarchy has {0} roots")]
    MultipleRoots(usize),
    #[error("class {0} is not mapped to a leaf")]
    UnmappedClass(usize),
    #[error("internal node {0} has a single child")]
    UnaryInternalNode(usize),
    #[error("malformed hierarchy at line {line}: {msg}")]
    MalformedHierarchy { line: usize, msg: String },
    #[error("child distribution of node {0} does not sum to 1")]
    UnnormalizedNode(usize),
    #[error("no model for internal node {0}")]
    MissingNodeModel(usize),

    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("feature indices not strictly increasing at line {line}")]
    NonMonotoneIndices { line: usize },
    #[error("invalid file format: {0}")]
    Format(String),
    #[error("conflicting configuration: {0}")]
    ConfigConflict(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            SizeOutOfRange { .. }
            | UndefinedAtSize { .. }
            | InvalidParams(_)
            | NonPositiveG { .. }
            | NotNormalized { .. }
            | UnsupportedUtility(_)
            | ThetaOutOfRange(_)
            | ConfigConflict(_) => ErrorCategory::Config,
            ProviderExhaustedEarly | NonMonotoneProvider { .. } | Invariant(_) => {
                ErrorCategory::Internal
            }
            _ => ErrorCategory::Data,
        }
    }
}
