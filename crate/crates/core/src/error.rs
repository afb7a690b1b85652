use thiserror::Error;

/// Errors produced by the sketching and regression pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix has no nonzero entries")]
    AllZeroMatrix,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("lambda out of range (got {0})")]
    NegativeLambda(f64),

    #[error("eps0 must lie in (0, 1) (got {0})")]
    Eps0OutOfRange(f64),

    #[error("eps must lie in (0, 1) (got {0})")]
    EpsOutOfRange(f64),

    #[error("leverage profile has no positive score")]
    AllZeroScores,

    #[error("matrix is not orthonormal: max |U^T U - I| = {0:e}")]
    NotOrthonormal(f64),

    #[error("input has zero Frobenius norm: {0}")]
    ZeroNormInput(&'static str),

    #[error("sketch lost rank after {retries} retries (rank(SA) = {sketched_rank}, rank(A) = {rank})")]
    SketchRankCollapse {
        retries: usize,
        sketched_rank: usize,
        rank: usize,
    },

    #[error("matrix dimensions must be positive")]
    NonPositiveDimension,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AllZeroMatrix => "AllZeroMatrix",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NegativeLambda(_) => "NegativeLambda",
            Error::Eps0OutOfRange(_) => "Eps0OutOfRange",
            Error::EpsOutOfRange(_) => "EpsOutOfRange",
            Error::AllZeroScores => "AllZeroScores",
            Error::NotOrthonormal(_) => "NotOrthonormal",
            Error::ZeroNormInput(_) => "ZeroNormInput",
            Error::SketchRankCollapse { .. } => "SketchRankCollapse",
            Error::NonPositiveDimension => "NonPositiveDimension",
            Error::NonFinite { .. } => "NonFinite",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
