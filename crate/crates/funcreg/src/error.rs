use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error in `{slice}`: {message}")]
    Numerical { slice: String, message: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate truth: true curve has zero integrated square")]
    DegenerateTruth,

    #[error("degenerate draws: all curves constant, no spread to scale by")]
    DegenerateDraws,

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("initialization failed: no finite density after {0} jittered attempts")]
    Init(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Ingest(e.to_string())
    }
}

impl Error {
    pub fn numerical(slice: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            slice: slice.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
