use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error at {context}: {message}")]
    Validation { context: String, message: String },

    #[error("free space is empty")]
    EmptyFreeSpace,

    #[error("no path between ({:.3}, {:.3}) and ({:.3}, {:.3})", .from.0, .from.1, .to.0, .to.1)]
    Unreachable { from: (f64, f64), to: (f64, f64) },

    #[error("malformed token sequence at index {index}: {message}")]
    MalformedSequence { index: usize, message: String },

    #[error("grid refinement violated at cell {cell}: known label changed")]
    RefinementViolation { cell: usize },

    #[error("frontier location {cell} is not a free cell")]
    FrontierNotFree { cell: usize },

    #[error("perimeter polyline is not closed")]
    OpenPerimeter,

    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

impl ForgeError {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        ForgeError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        ForgeError::Validation {
            context: context.into(),
            message: message.into(),
        }
    }
}
