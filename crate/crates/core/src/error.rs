use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (e.g. a non-positive weight).
    #[error("domain error: {0}")]
    Domain(String),

    /// The multiplier search could not find a bracket around the normalization root.
    #[error("multiplier search failed to bracket the root: linear = {linear:?}, rates = {rates:?}, prev = {prev:?}")]
    Bracket {
        linear: Vec<f64>,
        rates: Vec<f64>,
        prev: Vec<f64>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// One or more configuration problems, each naming the offending field.
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// A runtime invariant failed in strict mode.
    #[error("invariant violated at round {round}: {detail}")]
    Invariant { round: usize, detail: String },

    #[error("round {round} is outside 1..={horizon}")]
    RoundOutOfRange { round: usize, horizon: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}
