use thiserror::Error;

/// Crate-wide error type. Every fallible operation returns one of these
/// variants; the CLI maps them onto process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes or dims incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A computed value left the finite range (NaN or infinity).
    #[error("numerics error: {0}")]
    Numerics(String),

    /// Misuse of the autodiff tape (backward from an untracked tensor,
    /// mixing tensors from two tapes, bad seed length).
    #[error("graph error: {0}")]
    Graph(String),

    /// Invalid configuration value, config file, or CLI argument.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents (tensor files, images, manifests).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }
    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Exit code used by the CLI: 2 for anything the caller got wrong
    /// (config, shapes, bad files), 3 for numerics blowups. Check-suite
    /// failures use code 4, handled separately by the CLI since they are
    /// not `Error` values.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerics(_) => 3,
            _ => 2,
        }
    }
}
