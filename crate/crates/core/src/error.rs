use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("timestamps out of order at line {line}: {timestamp} follows {previous}")]
    Ordering {
        line: u64,
        previous: i64,
        timestamp: i64,
    },

    #[error("duplicate timestamp {timestamp} at line {line}")]
    DuplicateTimestamp { line: u64, timestamp: i64 },

    /// Missing minutes, inclusive range in epoch milliseconds.
    #[error("gap in minute grid: missing {first_missing}..={last_missing}")]
    Gap { first_missing: i64, last_missing: i64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("index {index} out of range (length {len})")]
    Index { index: usize, len: usize },

    #[error("insufficient history: block ending at {end_index} needs {window} minutes")]
    InsufficientHistory { end_index: usize, window: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("sharpe ratio undefined: per-step returns have zero variance")]
    UndefinedSharpe,

    #[error("configuration error: {0}")]
    Config(String),

    /// Transport failure or a retryable server status.
    #[error("fetch failed: {0}")]
    Fetch(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("empty series: {0}")]
    EmptySeries(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Argument(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Ordering { .. }
                | Error::DuplicateTimestamp { .. }
                | Error::Gap { .. }
                | Error::EmptySeries(_)
        )
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Fetch(_))
    }
}
