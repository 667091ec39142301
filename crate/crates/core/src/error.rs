use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entry ({i},{j}) = {upper} does not equal entry ({j},{i}) = {lower}")]
    NotSymmetric { i: usize, j: usize, upper: f64, lower: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix must have positive size")]
    EmptyMatrix,

    #[error("eigensolver did not converge within {iterations} iterations")]
    SolverFailure { iterations: usize },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {sigma_min:e} is below -{tol:e}")]
    NotPsd { sigma_min: f64, tol: f64 },

    #[error("matrix has {found} eigenvalues above tolerance but the rank cap is {cap}")]
    RankCapExceeded { found: usize, cap: usize },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("no polynomial of degree <= {max_degree} achieves sup error {target}")]
    DegreeExhausted { max_degree: usize, target: f64 },

    #[error("smoothing order p = {p} is outside the supported range 0..=30")]
    OrderOutOfRange { p: usize },

    #[error("quantization step must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("a non-finite value was submitted to the blackboard")]
    NonFinitePost,

    #[error("posted value {value} exceeds the declared range {range}")]
    RangeExceeded { value: f64, range: f64 },

    #[error("the public coin for this run was already seeded")]
    CoinAlreadySeeded,

    #[error("the public coin has not been seeded")]
    CoinNotSeeded,

    #[error("machine {requester} may not access the local shard of machine {owner}")]
    ShardAccessDenied { requester: usize, owner: usize },

    #[error("no machine with index {0} (indices are 1-based)")]
    NoSuchMachine(usize),

    #[error("operator norm estimate {estimate} exceeds the admissible bound {bound}")]
    OperatorNormTooLarge { estimate: f64, bound: f64 },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error")]
    Io(#[from] std::io::Error),

    #[error("malformed matrix file: {0}")]
    BadMatrixFile(String),

    #[error("json error")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
