use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. `key` names the offending
    /// config key (dotted path, e.g. `pool.subchannels_per_subframe`).
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("failed to parse config: {0}")]
    ConfigSyntax(String),

    #[error("no candidate resources to select from")]
    NoCandidates,

    #[error("sub-frame {subframe} was already recorded (last recorded: {last})")]
    DuplicateSubframe { subframe: u64, last: u64 },

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("empty sample set")]
    EmptySamples,

    #[error("baseline CCDF is zero over the whole comparison range")]
    ZeroBaseline,

    #[error("unknown channel kind `{0}`")]
    UnknownChannel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table {path}: {reason}")]
    Table { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
