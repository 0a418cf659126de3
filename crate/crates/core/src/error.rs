use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum PosiError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical precision lost: {0}")]
    Precision(String),
    #[error("rank determination is ambiguous: {0}")]
    Degenerate(String),
    #[error("rank-deficient models in universe: {0}")]
    RankDeficient(String),
    #[error("matrix is numerically singular: {0}")]
    Singular(String),
    #[error("universe too large: {0}")]
    Budget(String),
    #[error("no bracket containing the target was found: {0}")]
    Bracket(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl PosiError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PosiError::Precision(_) | PosiError::Bracket(_) => 3,
            PosiError::NonConvergence(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PosiError>;
