use thiserror::Error;

pub type Result<T> = std::result::Result<T, SotError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SotError {
    #[error("matrix shape {rows}x{cols} is invalid: {reason}")]
    InvalidShape {
        rows: usize,
        cols: usize,
        reason: &'static str,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroNormRow(usize),
    #[error("row {row} is not unit-normalized (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("distance matrix is already masked")]
    AlreadyMasked,
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid cost matrix: {0}")]
    InvalidCost(&'static str),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("kernel sum underflowed to zero at {axis} {index} (use log-domain mode)")]
    NumericalUnderflow { axis: &'static str, index: usize },
    #[error("exhaustive oracle refuses n = {0} (limit 10)")]
    TooLarge(usize),
    #[error("no fixed-point-free permutation exists for n < 2")]
    Infeasible,
    #[error("distance matrix is asymmetric (max |d_ij - d_ji| = {0})")]
    Asymmetric(f64),
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(&'static str),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("PCA target dimension {target} exceeds min(n, d) = {limit}")]
    TargetTooLarge { target: usize, limit: usize },
    #[error("class {class} has {available} points, episode needs {needed}")]
    InsufficientPoints {
        class: usize,
        available: usize,
        needed: usize,
    },
    #[error("dataset has a single class")]
    SingleClass,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl SotError {
    /// True for failures caused by malformed input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            SotError::Parse { .. }
                | SotError::Io(_)
                | SotError::InvalidSpec(_)
                | SotError::InvalidParams(_)
                | SotError::InvalidShape { .. }
                | SotError::LengthMismatch(..)
        )
    }
}

impl From<std::io::Error> for SotError {
    fn from(e: std::io::Error) -> Self {
        SotError::Io(e.to_string())
    }
}
