use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero has no multiplicative inverse in GF(2^8)")]
    ZeroInverse,

    #[error("dimension mismatch: expected {expected} coefficients and {expected_payload} payload bytes, got {got} and {got_payload}")]
    DimensionMismatch {
        expected: usize,
        expected_payload: usize,
        got: usize,
        got_payload: usize,
    },

    #[error("cannot recode from an empty matrix")]
    EmptyMatrix,

    #[error("matrix is rank deficient: rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("no innovative reply available for {0}")]
    NothingToServe(String),

    #[error("content store is full")]
    CapacityExceeded,

    #[error("unknown name prefix {0}")]
    UnknownPrefix(String),

    #[error("no route for prefix {0}")]
    NoRoute(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("decoded payload differs from source data for {0}")]
    DecodeMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
