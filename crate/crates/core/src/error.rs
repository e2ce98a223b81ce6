use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSpd(_)
                | Error::Singular(_)
                | Error::Degenerate(_)
                | Error::NonConvergence(_)
                | Error::Precondition(_)
        )
    }

    /// Stable short code used on the diagnostic stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape(_) => "E_SHAPE",
            Error::InvalidArgument(_) => "E_ARG",
            Error::NotSpd(_) => "E_NOT_SPD",
            Error::Singular(_) => "E_SINGULAR",
            Error::Precondition(_) => "E_PRECONDITION",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::NonConvergence(_) => "E_NO_CONVERGENCE",
            Error::Format(_) => "E_FORMAT",
            Error::Config(_) => "E_CONFIG",
            Error::Io(_) => "E_IO",
        }
    }
}
