use thiserror::Error;

/// Errors raised by kernel construction, convolution, training and I/O.
#[derive(Debug, Error)]
pub enum SmpError {
    /// Tensor or parameter shapes do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A value violates its domain (non-positive radius, empty grid, bad config).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A gradient contained NaN or Inf; training cannot continue.
    #[error("non-finite gradient in {context}: {detail}")]
    NonFiniteGradient { context: String, detail: String },

    /// The training loss left the finite range.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A checkpoint document failed to parse or validate.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// File I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SmpError>;

impl SmpError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SmpError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
