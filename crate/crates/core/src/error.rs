use thiserror::Error;

/// Errors raised by the simplex primitives, the discrete steps and the flows.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `p` puts mass on an index where the reference distribution has none.
    #[error("support mismatch: p[{index}] > 0 but q[{index}] = 0")]
    SupportMismatch { index: usize },

    #[error("degenerate face: the point has no mass on the selected support")]
    DegenerateFace,

    #[error("point is not strictly interior: coordinate {index} is zero")]
    NotInterior { index: usize },

    #[error("identity not supported: {0}")]
    UnsupportedIdentity(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
