use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    Empty,
    #[error("entry {index} = {value} lies outside [0, 1]")]
    EntryOutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, outside tolerance {tolerance}")]
    SumOutOfTolerance { sum: f64, tolerance: f64 },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("class index {index} out of range for {k} classes")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("record width {found} does not match dataset width {expected}")]
    InconsistentWidth { expected: usize, found: usize },
    #[error("record has neither probabilities nor logits")]
    MissingOutputs,
    #[error("probabilities disagree with softmax(logits) by {0}")]
    ProbsLogitsMismatch(f64),

    #[error("lens {lens} is invalid for {k} classes: {reason}")]
    InvalidLensForK { lens: String, k: usize, reason: String },
    #[error("group map does not cover class {0}")]
    PartialMap(usize),
    #[error("group {0} has no classes")]
    EmptyGroup(usize),

    #[error("invalid selector: {0}")]
    InvalidSelector(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("inter-interval distance needs scalar (k'=1) inputs, got k'={0}")]
    InterIntervalOnNonScalar(usize),
    #[error("weight matrix is not positive semi-definite (eigenvalue {eigenvalue})")]
    NonPsdMatrix { eigenvalue: f64 },
    #[error("invalid distance: {0}")]
    InvalidDistance(String),
    #[error("distance {distance} cannot be used with lensed dimension {dim}")]
    DistanceLensMismatch { distance: String, dim: usize },

    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("selection is empty")]
    EmptySelection,

    #[error("sample fraction {fraction} yields zero draws from {n} records")]
    FractionTooSmall { fraction: f64, n: usize },
    #[error("invalid analysis parameter: {0}")]
    InvalidParameter(String),

    #[error("validation set contains a single class")]
    DegenerateValidation,
    #[error("validation set needs at least {needed} records, got {found}")]
    TooFewRecords { needed: usize, found: usize },
    #[error("invalid calibrator: {0}")]
    InvalidCalibrator(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        source: Box<Error>,
    },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}
