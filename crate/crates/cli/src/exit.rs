//! Exit codes and the error JSON written to standard error.

use lever_sketch_core::Error;
use serde::Serialize;

pub const OK: i32 = 0;
/// `verify` ran but the pass fraction fell below `--min-pass`.
pub const CHECK_FAILED: i32 = 1;
pub const MALFORMED_INPUT: i32 = 2;
pub const DIMENSION_MISMATCH: i32 = 3;
pub const RANK_COLLAPSE: i32 = 4;
pub const INVALID_FLAG: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    /// A flag value or flag combination that cannot be used.
    #[error("{0}")]
    Flag(String),
}

impl CliError {
    pub fn flag(msg: impl Into<String>) -> Self {
        CliError::Flag(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Flag(_) => INVALID_FLAG,
            CliError::Core(e) => match e {
                Error::Parse { .. }
                | Error::Io(_)
                | Error::NonFinite { .. }
                | Error::NonPositiveDimension
                | Error::AllZeroMatrix
                | Error::AllZeroScores
                | Error::ZeroNormInput(_)
                | Error::NotOrthonormal(_) => MALFORMED_INPUT,
                Error::DimensionMismatch(_) => DIMENSION_MISMATCH,
                Error::SketchRankCollapse { .. } => RANK_COLLAPSE,
                Error::NegativeLambda(_)
                | Error::Eps0OutOfRange(_)
                | Error::EpsOutOfRange(_)
                | Error::InvalidParameter(_) => INVALID_FLAG,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Flag(_) => "InvalidFlag",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn to_json(&self) -> String {
        error_json(self.kind(), &self.to_string(), self.exit_code())
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: &'a str,
    exit_code: i32,
}

pub fn error_json(kind: &str, message: &str, exit_code: i32) -> String {
    serde_json::to_string(&ErrorJson {
        error: kind,
        message,
        exit_code,
    })
    .expect("error serializes")
}
