use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("marked triangle {0} does not exist")]
    InvalidMarking(usize),
    #[error("meshes are not nested refinements")]
    NotNested,
    #[error("marking sequence is empty")]
    EmptyMarking,
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vector of length {found} does not match {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("estimator vanishes, nothing to mark")]
    ZeroEstimator,
    #[error("iteration did not stop within {0} steps")]
    SolverCap(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rate fit needs at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("diagnostic oracle unavailable: {0}")]
    OracleUnavailable(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
