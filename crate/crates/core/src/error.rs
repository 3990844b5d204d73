use thiserror::Error;

pub type Result<T> = std::result::Result<T, OsgError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OsgError {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("closed-form kernel requires the exponential slit profile")]
    UnsupportedProfile,

    /// The radial quadrature ran out of panels before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    Accuracy { estimate: f64, error_bound: f64 },

    #[error("no signal on ring at p = {ring}: peak density {peak:e}")]
    NoSignal { ring: f64, peak: f64 },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl OsgError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        OsgError::InvalidArgument(msg.into())
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            OsgError::Io(_) => 1,
            OsgError::Parse { .. } => 2,
            OsgError::Accuracy { .. } | OsgError::NoSignal { .. } => 3,
            OsgError::InvalidState(_)
            | OsgError::InvalidArgument(_)
            | OsgError::UnsupportedProfile => 4,
        }
    }
}

impl From<std::io::Error> for OsgError {
    fn from(e: std::io::Error) -> Self {
        OsgError::Io(e.to_string())
    }
}
