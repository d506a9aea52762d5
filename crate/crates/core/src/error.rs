use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs that are individually well-formed but do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("nodes cannot reach the destination: {}", .0.join(", "))]
    Unreachable(Vec<String>),

    #[error("index {index} outside of range [{lo}, {hi}] for {what}")]
    Index {
        what: String,
        index: i64,
        lo: i64,
        hi: i64,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded linear program")]
    Unbounded,

    #[error("inner problem did not converge on arc {arc} at budget index {k} (residual {residual:e})")]
    NonConvergence { arc: String, k: i64, residual: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub(crate) fn index(what: impl Into<String>, index: i64, lo: i64, hi: i64) -> Self {
        Error::Index {
            what: what.into(),
            index,
            lo,
            hi,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
