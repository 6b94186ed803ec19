use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration budget exceeded: n^q = {required} exceeds limit {limit}")]
    BudgetExceeded { required: u128, limit: u128 },

    #[error("mixing table queried outside its grid: {0}")]
    Extrapolation(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("missing bound ingredient `{0}`")]
    MissingIngredient(String),

    #[error("singular design matrix: {0}")]
    SingularFit(String),

    #[error("degenerate variance estimate: {0}")]
    DegenerateVariance(String),

    #[error("replication {rep} failed: {source}")]
    Replication {
        rep: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl Error {
    /// Stable snake-case tag for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::Extrapolation(_) => "extrapolation",
            Error::Unsupported(_) => "unsupported",
            Error::MissingIngredient(_) => "missing_ingredient",
            Error::SingularFit(_) => "singular_fit",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::Replication { .. } => "replication_failed",
            Error::Parse(_) => "parse_error",
            Error::Io(_) => "io_error",
        }
    }
}
