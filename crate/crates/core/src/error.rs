use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: lo ({lo}) must be strictly below hi ({hi})")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("too few basis functions: K = {num_basis} is below the order m = {order}")]
    TooFewBasis { num_basis: usize, order: usize },

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("dimension {dim} too small for a difference penalty of order {order}")]
    DimensionTooSmall { dim: usize, order: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("response has a single class; both 0 and 1 are required")]
    OneClassInput,

    #[error("labels must be 0 or 1, found {0}")]
    InvalidLabel(f64),

    #[error("separation detected: linear predictor magnitude reached {magnitude:.3e}")]
    SeparationDetected { magnitude: f64 },

    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("step {requested} out of range (fit has {available} steps)")]
    StepOutOfRange { requested: usize, available: usize },

    #[error("could not draw a two-class dataset after {retries} retries (n = {n})")]
    DegenerateAfterRetries { retries: u32, n: usize },

    #[error("class {label} has {count} member(s); at least 2 are required for a stratified split")]
    ClassTooSmall { label: u8, count: usize },

    #[error("every grid fit failed")]
    AllFitsFailed,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("label value '{0}' is neither the positive label nor a recognised negative")]
    UnknownLabelValue(String),

    #[error("every row was dropped because of missing values")]
    AllRowsDropped,

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable code written into experiment records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDomain { .. } => "invalid-domain",
            Error::TooFewBasis { .. } => "too-few-basis",
            Error::NonFinite(_) => "non-finite",
            Error::DimensionTooSmall { .. } => "dimension-too-small",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::OneClassInput => "one-class-input",
            Error::InvalidLabel(_) => "invalid-label",
            Error::SeparationDetected { .. } => "separation-detected",
            Error::InvalidRange { .. } => "invalid-range",
            Error::EmptyInput(_) => "empty-input",
            Error::StepOutOfRange { .. } => "step-out-of-range",
            Error::DegenerateAfterRetries { .. } => "degenerate-after-retries",
            Error::ClassTooSmall { .. } => "class-too-small",
            Error::AllFitsFailed => "all-fits-failed",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Parse { .. } => "parse-error",
            Error::UnknownLabelValue(_) => "unknown-label-value",
            Error::AllRowsDropped => "all-rows-dropped",
            Error::Io { .. } => "io-error",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
