use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid support {0}: must lie in (0, 1]")]
    InvalidSupport(f64),
    #[error("cannot embed empty sentence")]
    EmptySentence,
    #[error("undefined cosine: zero vector")]
    UndefinedCosine,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot average an empty list of vectors")]
    EmptyMean,
    #[error("no patterns available")]
    NoPatterns,
    #[error("degenerate pattern record: {0}")]
    DegeneratePattern(String),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {inputs} inputs vs {outputs} outputs")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("remote embedder: {0}")]
    Remote(#[from] RemoteError),
    #[error("state version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable or malformed persisted state.
    pub fn is_state_format(&self) -> bool {
        matches!(
            self,
            Error::VersionMismatch { .. } | Error::InvalidState(_) | Error::Json(_)
        )
    }
}

/// Failures of the HTTP embedding provider.
#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("server dimension {got} differs from declared {declared}")]
    Dimension { declared: usize, got: usize },
}
