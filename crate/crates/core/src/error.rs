use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("singular matrix: pivot {pivot:e} at column {col} below threshold {threshold:e}")]
    Singular {
        col: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("matrix is not symmetric: asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("infeasible partition: {0}")]
    Partition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("iteration diverged at round {round} (agent {agent}); step sizes may violate the admissible bound")]
    Diverged { round: usize, agent: usize },

    #[error("no unique solution: {0}")]
    NoUniqueSolution(String),

    #[error("rate estimation failed: {0}")]
    Estimation(String),

    #[error("reference pair rejected: {0}")]
    Reference(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown fixture `{name}`; available: {available}")]
    UnknownFixture { name: String, available: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
