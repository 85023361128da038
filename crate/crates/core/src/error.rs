use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("row {0} has zero Euclidean norm")]
    ZeroRowNorm(usize),

    #[error("row {0} is constant (zero variance after centering)")]
    ZeroVariance(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigen solver did not converge for eigenvalue {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },

    #[error("singular linear system")]
    Singular,

    #[error("singular values collide within {gap:e}; component formula undefined")]
    NearDegenerate { gap: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Painlevé II integration blew up at t = {t} (|q| = {q:e})")]
    Blowup { t: f64, q: f64 },

    #[error("argument out of supported range: {0}")]
    OutOfRange(String),

    #[error("replica {replica} failed: {reason}")]
    ReplicaFailed { replica: u64, reason: String },

    #[error("too many aborted replicas: {aborted} of {total}")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
