use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: file contains no triples")]
    EmptyFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("store already contains inverse relations")]
    AlreadyAugmented,

    #[error("relation name {0:?} uses the reserved inverse suffix")]
    ReservedName(String),

    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },

    #[error("target relation {0:?} has fewer than 2 triples and cannot be split")]
    TooFewTriples(String),

    #[error("triple is not present in the training store: {0}")]
    TargetNotInStore(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed explanation chain: {0}")]
    MalformedChain(String),

    #[error("rule has a head variable that is not bound by its body: {0}")]
    UnboundHeadVariable(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("malformed record: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
