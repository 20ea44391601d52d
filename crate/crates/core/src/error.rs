use thiserror::Error;

/// Broad failure class, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Input data could not be read or violates a precondition.
    Data,
    /// A numerical routine failed.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature `{0}` has zero variance")]
    ConstantFeature(String),

    #[error("data contains missing cells")]
    MissingData,

    #[error("invalid split fractions: {0}")]
    BadFractions(String),

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("cannot parse `{text}` at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        text: String,
    },

    #[error("row {0} has no observed cells")]
    AllMissingRow(usize),

    #[error("feature `{0}` has no observed values")]
    AllMissingFeature(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("k = {k} is too large for n = {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("local weight system for row {0} is singular")]
    SingularLocalSystem(usize),

    #[error("eigen decomposition failed: {0}")]
    EigenFailure(String),

    #[error("perplexity calibration failed for row {0}")]
    CalibrationFailure(usize),

    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),

    #[error("layer {0} is not a hidden layer")]
    BadLayer(usize),

    #[error("labels contain a single class")]
    SingleClassData,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::BadFractions(_) | Error::KTooLarge { .. } | Error::BadLayer(_) => {
                ErrorKind::Usage
            }
            Error::SingularLocalSystem(_)
            | Error::EigenFailure(_)
            | Error::CalibrationFailure(_)
            | Error::NumericalDivergence(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
