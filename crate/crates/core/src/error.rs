use thiserror::Error;

/// Every failure the toolkit reports. Variants map onto CLI exit codes in `cli`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown point id `{0}`")]
    UnknownPoint(String),
    #[error("graph is disconnected: `{0}` is unreachable from the basepoint")]
    Disconnected(String),
    #[error("window too large: {points} points exceeds the limit of {limit} ({bytes} bytes of pairwise storage)")]
    TooLarge { points: usize, limit: usize, bytes: u64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A certificate or witness was checked and did not hold.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
