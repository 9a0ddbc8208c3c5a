use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty bytecode")]
    EmptyBytecode,

    #[error("malformed hex: {0}")]
    MalformedHex(String),

    #[error("manifest error at `{path}`: {message}")]
    Manifest { path: String, message: String },

    #[error("role error: {0}")]
    Role(String),

    #[error("bind error: {0}")]
    Bind(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("assembly error: {0}")]
    Asm(String),

    #[error("analysis cancelled")]
    Cancelled,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn manifest(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            message: message.into(),
        }
    }
}
