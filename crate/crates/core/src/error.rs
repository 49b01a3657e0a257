use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shot at ({x}, {y}) lies outside the {width} x {length} court")]
    OutOfCourt {
        x: f64,
        y: f64,
        width: f64,
        length: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no shots supplied")]
    EmptyInput,

    #[error("every player has fewer than {minimum} attempts")]
    NoQualifyingPlayers { minimum: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("zero total count: supply an explicit z0 for this player")]
    ZeroCountEmpiricalBias,

    #[error("surface has zero total volume")]
    ZeroVolume,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("rank {k} out of range (must be in 1..={max})")]
    RankOutOfRange { k: usize, max: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("requested {requested} planted bases but only {available} primitives exist")]
    TooManyBases { requested: usize, available: usize },

    #[error("planted bases overlap: cosine similarity {similarity:.3} between {a} and {b}")]
    OverlappingBases { a: usize, b: usize, similarity: f64 },

    #[error("player {0:?} has no loadings")]
    UnknownPlayer(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable code, used for CLI exit reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::OutOfCourt { .. } => "E_OUT_OF_COURT",
            Error::InvalidGrid(_) => "E_INVALID_GRID",
            Error::EmptyInput => "E_EMPTY_INPUT",
            Error::NoQualifyingPlayers { .. } => "E_NO_PLAYERS",
            Error::InvalidParameter(_) => "E_INVALID_PARAMETER",
            Error::NotPositiveDefinite { .. } => "E_NOT_PD",
            Error::ZeroCountEmpiricalBias => "E_ZERO_COUNT",
            Error::ZeroVolume => "E_ZERO_VOLUME",
            Error::ShapeMismatch { .. } => "E_SHAPE",
            Error::RankOutOfRange { .. } => "E_RANK",
            Error::IndexOutOfRange { .. } => "E_INDEX",
            Error::TooManyBases { .. } => "E_TOO_MANY_BASES",
            Error::OverlappingBases { .. } => "E_OVERLAP",
            Error::UnknownPlayer(_) => "E_UNKNOWN_PLAYER",
            Error::Parse { .. } => "E_PARSE",
            Error::Io { .. } => "E_IO",
            Error::Csv { .. } => "E_CSV",
            Error::Stage { source, .. } => source.code(),
        }
    }
}
