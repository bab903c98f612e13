use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (bound {bound})")]
    Range {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("{what} did not converge: {detail}")]
    Convergence { what: String, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("{location}: {message}")]
    Config { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Validation(_) | Error::Shape { .. } | Error::Range { .. } | Error::Config { .. } => 3,
            Error::Convergence { .. } | Error::Numeric(_) => 4,
            Error::Io(_) => 5,
        }
    }
}
