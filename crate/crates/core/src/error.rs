use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a point where the closed form is singular.
    #[error("singular evaluation: {0}")]
    Singular(String),

    /// A numerical routine failed to meet its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// Malformed input file; `line` is 1-based.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for this error class: 2 for malformed input,
    /// 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config { .. } | Error::InvalidParameter { .. } => 2,
            Error::Domain(_) | Error::Singular(_) | Error::Numerical(_) | Error::Alignment(_) => 3,
            Error::Io(_) => 1,
        }
    }
}
