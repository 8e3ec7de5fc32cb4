use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("degenerate simplex: |det| = {det:e}")]
    DegenerateSimplex { det: f64 },
    #[error("degenerate piece: slope change {delta:e} below tolerance")]
    DegeneratePiece { delta: f64 },
    #[error("infeasible parameters: {reason} (smallest achievable delta ~ {min_delta:e})")]
    Infeasible { reason: String, min_delta: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
