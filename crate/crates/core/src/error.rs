use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/matrix dimensions do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Gaussian elimination found no usable pivot in the named column.
    #[error("singular matrix: pivot magnitude below {limit:e} at column {column}")]
    Singular { column: usize, limit: f64 },

    /// Input value outside the operation's domain (bad factor, query outside
    /// the knot span, label out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed file contents (bad magic, truncated payload, bad header).
    #[error("format error: {0}")]
    Format(String),

    /// Architecture-shorthand parse failure, anchored to a byte offset of the
    /// original input string.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Bad key/value in a config file.
    #[error("config error: {0}")]
    Config(String),

    /// Numeric breakdown during training (non-finite loss, divergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
