use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("wind vector must be non-zero")]
    ZeroWind,

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("emission rates must be non-negative (entry {index} is {value})")]
    NegativeEmission { index: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("inner solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("enumeration oracle limited to 15 unknowns, got {0}")]
    TooManyUnknowns(usize),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("too many diverged inner solves at outer iteration {iteration}: {failed} of {batch}")]
    InnerBreakdown { iteration: usize, failed: usize, batch: usize },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Self::Sample { index, source: Box::new(self) }
    }
}
