use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex index {index} out of range for a graph on {p} vertices")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("unsupported graph kind `{0}`")]
    UnsupportedKind(String),
    #[error("graph kind needs at least {min} vertices, got {p}")]
    TooFewVertices { p: usize, min: usize },
    #[error("edge ({0}, {1}) is present; remove it before profiling paths")]
    EdgePresent(usize, usize),
    #[error("edge ({0}, {1}) is absent")]
    EdgeAbsent(usize, usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph is not decomposable")]
    NotDecomposable,

    #[error("shape parameter must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("gamma shape parameters must be positive")]
    NonPositiveShape,
    #[error("path count must be non-negative")]
    NegativeK,
    #[error("threshold must be positive, got {0}")]
    NonPositiveX(f64),
    #[error("G-Wishart shape must exceed 2, got {0}")]
    DeltaTooSmall(f64),
    #[error("at least one Monte Carlo sample is required")]
    ZeroSamples,
    #[error("path profile was truncated by the enumeration caps")]
    TruncatedProfile,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("precision matrix has a non-zero entry at missing edge ({0}, {1})")]
    PatternViolation(usize, usize),
    #[error("free Cholesky entry ({0}, {1}) was not supplied")]
    MissingFreeEntry(usize, usize),
    #[error("Cholesky diagonal entry {0} is not positive")]
    NonPositiveDiagonal(usize),
    #[error("vertex order is not a permutation of 0..{0}")]
    InvalidOrder(usize),
    #[error("submatrix is singular")]
    SingularSubmatrix,
    #[error("conditional variance a11 is not positive")]
    NonPositiveA11,
    #[error("completion did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("no legal move: total jump rate underflowed to zero")]
    NoLegalMove,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
