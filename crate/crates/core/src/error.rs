use thiserror::Error;

/// Errors produced by the estimators and their supporting numerics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix (det = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    #[error("empty neighborhood: {0}")]
    EmptyNeighborhood(String),

    #[error("singular local covariance (det = {det:e})")]
    SingularSigma { det: f64 },

    #[error("parameter recovery failed: {0}")]
    RecoveryFailure(String),

    #[error("k = {k} is not supported by the bias sampler (requires k >= 3)")]
    UnsupportedK { k: usize },

    #[error("no bias entry for k = {k}, d = {d}")]
    MissingEntry { k: usize, d: usize },

    #[error("bias table holds k = {k}, d = {d} only in form {found}, requested {requested}")]
    FormMismatch {
        k: usize,
        d: usize,
        found: String,
        requested: String,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SingularMatrix { .. } => "singular-matrix",
            Error::DegenerateBandwidth(_) => "degenerate-bandwidth",
            Error::EmptyNeighborhood(_) => "empty-neighborhood",
            Error::SingularSigma { .. } => "singular-sigma",
            Error::RecoveryFailure(_) => "recovery-failure",
            Error::UnsupportedK { .. } => "unsupported-k",
            Error::MissingEntry { .. } => "missing-entry",
            Error::FormMismatch { .. } => "form-mismatch",
            Error::Parse { .. } => "parse",
            Error::EstimationFailure(_) => "estimation-failure",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
        }
    }
}
