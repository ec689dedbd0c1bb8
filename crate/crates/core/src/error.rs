use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size mismatch: bound vector has {bound} entries but there are {samples} order statistics")]
    SizeMismatch { bound: usize, samples: usize },

    /// The generalized inverse is +∞ at the requested level.
    #[error("inverse unbounded at level {0}")]
    InverseUnbounded(f64),

    /// A bound would be infinite (typically a missing support maximum).
    #[error("{0}")]
    Divergent(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("calibration did not converge: {0}")]
    NoConvergence(String),

    #[error("truncation window contains no order statistics")]
    EmptyWindow,

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// True for errors caused by an unbounded quantity rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergent(_) | Error::InverseUnbounded(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Serialization(err.to_string())
    }
}
