use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A configuration value is out of its valid range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Dataset, image or model-file content is invalid.
    #[error("data error: {0}")]
    Data(String),

    /// A loss or activation became non-finite during training.
    #[error("non-finite value in {component}: {detail}")]
    NonFinite { component: String, detail: String },

    /// A verification or acceptance check failed.
    #[error("verification failure: {0}")]
    Verify(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
